import os
from dotenv import load_dotenv

# 加载环境变量
env_path = os.path.join(os.path.dirname(__file__), '../.env')
load_dotenv(env_path)

# 基准测试的最大并发数
MAX_CONCURRENCY = int(os.getenv('SCALEREG_MAX_CONCURRENCY') or 4)

# 日志
LOG_LEVEL = os.getenv('SCALEREG_LOG_LEVEL') or 'INFO'
LOG_FILE = os.getenv('SCALEREG_LOG_FILE') or 'scalereg.log'
