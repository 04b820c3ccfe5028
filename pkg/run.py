# -*- coding: utf-8 -*-
import os
from dotenv import load_dotenv

env_path = os.path.join(os.path.dirname(__file__), '.env')
load_dotenv(env_path)

import sys
import time
import argparse

from loguru import logger
from pydantic import ValidationError

from scalereg import settings

logger.remove()
logger.add(sys.stdout, level=settings.LOG_LEVEL)
logger.add(settings.LOG_FILE, level="DEBUG")

from scalereg.config import (
    DEGENERACY_EXIT_CODE,
    MERGE_REJECTED_EXIT_CODE,
    PARSE_ERROR_EXIT_CODE,
)
from scalereg.pipeline import parse_pair
from scalereg.pipeline.bench import BenchPipeline
from scalereg.pipeline.merge import MergePipeline
from scalereg.pipeline.register import RegisterPipeline
from scalereg.registration.exceptions import (
    DegenerateScaleError,
    MergeRejected,
    ScaleRegError,
)
from scalereg.registration.schema import MergeConfig, ScaleBounds, SolverConfig, TrimConfig


def add_solver_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--max-iters', type=int, default=None, help='最大迭代次数')
    parser.add_argument('--tol', type=float, default=None, help='目标函数相对下降阈值')
    parser.add_argument('--init', type=str, default=None,
                        help='初始变换 s,rot,tx,ty[,tz]，或 identity / centroid / pca / axes')


def add_trim_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--lambda', dest='lambda_', type=float, default=None, help='重叠率惩罚指数')
    parser.add_argument('--min-overlap', type=float, default=None, help='最小重叠率')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='run.py', description='相似变换点集配准与栅格地图合并')
    sub = parser.add_subparsers(dest='command', required=True)

    register = sub.add_parser('register', help='尺度 ICP 配准两个点集文件')
    register.add_argument('data', help='数据形状 P')
    register.add_argument('model', help='模型形状 Q')
    register.add_argument('--out', default='transform.json', help='变换 JSON')
    register.add_argument('--trace', default='trace.csv', help='逐次迭代记录 CSV')
    register.add_argument('--rigid', action='store_true', help='固定尺度，只估计旋转和平移')
    add_solver_arguments(register)

    trim = sub.add_parser('trim-register', help='尺度裁剪 ICP 配准部分重叠的点集')
    trim.add_argument('data', help='数据形状 P')
    trim.add_argument('model', help='模型形状 Q')
    trim.add_argument('--out', default='transform.json', help='变换 JSON')
    trim.add_argument('--trace', default='trace.csv', help='逐次迭代记录 CSV')
    trim.add_argument('--bounds', type=str, default=None, help='lo,hi: 运行有界尺度基线')
    add_solver_arguments(trim)
    add_trim_arguments(trim)

    merge = sub.add_parser('merge-maps', help='合并两张 PGM 栅格地图')
    merge.add_argument('reference', help='参考地图 PGM')
    merge.add_argument('other', help='待合并地图 PGM')
    merge.add_argument('--out', default='merged.pgm', help='合并地图 PGM')
    merge.add_argument('--report', default='merge_report.json', help='合并报告 JSON')
    merge.add_argument('--ref-resolution', type=float, default=1.0, help='参考地图分辨率 (米/栅格)')
    merge.add_argument('--other-resolution', type=float, default=1.0, help='待合并地图分辨率 (米/栅格)')
    merge.add_argument('--occ-thresh', type=int, default=None, help='占用灰度阈值')
    merge.add_argument('--free-thresh', type=int, default=None, help='空闲灰度阈值')
    merge.add_argument('--max-rmse-cells', type=float, default=None, help='残差 RMS 上限 (参考地图栅格)')
    merge.add_argument('--ascii', action='store_true', help='输出 P2 而不是 P5')
    add_solver_arguments(merge)
    add_trim_arguments(merge)

    bench = sub.add_parser('bench', help='按实验配置运行蒙特卡洛试验')
    bench.add_argument('config', help='key=value 实验配置文件')
    bench.add_argument('--out-dir', default=None, help='输出目录，覆盖配置中的 output_dir')
    bench.add_argument('--seed', type=int, default=None, help='随机种子，覆盖配置')
    bench.add_argument('--trials', type=int, default=None, help='试验次数，覆盖配置')
    bench.add_argument('--max-concurrency', type=int, default=None, help='最大并发数')
    return parser


def _config_kwargs(args: argparse.Namespace, trimmed: bool) -> dict:
    kwargs = {'max_iterations': args.max_iters, 'objective_rel_tol': args.tol}
    if trimmed:
        kwargs.update({'lambda_': args.lambda_, 'min_overlap': args.min_overlap})
    return {k: v for k, v in kwargs.items() if v is not None}


def command_register(args: argparse.Namespace) -> None:
    trimmed = args.command == 'trim-register'
    kwargs = _config_kwargs(args, trimmed)
    if trimmed:
        cfg = TrimConfig(**kwargs)
        bounds = ScaleBounds(**dict(zip(('low', 'high'), parse_pair(args.bounds, '--bounds')))) if args.bounds else None
    else:
        cfg = SolverConfig(estimate_scale=not args.rigid, **kwargs)
        bounds = None

    pipeline = RegisterPipeline(
        args.data, args.model, args.out, args.trace,
        init=args.init or 'identity', cfg=cfg, trimmed=trimmed, bounds=bounds,
    )
    result = pipeline.run().get('result')
    logger.info(f'配准结果已写入 {args.out}: 尺度 {result.transform.scale:.9f}, 终止原因 {result.termination.value}')


def command_merge(args: argparse.Namespace) -> None:
    merge_kwargs = {
        'occ_thresh': args.occ_thresh,
        'free_thresh': args.free_thresh,
        'max_rmse_cells': args.max_rmse_cells,
    }
    merge_cfg = MergeConfig(**{k: v for k, v in merge_kwargs.items() if v is not None})
    pipeline = MergePipeline(
        args.reference, args.other, args.out, args.report,
        cfg=TrimConfig(**_config_kwargs(args, trimmed=True)),
        merge_cfg=merge_cfg,
        init=args.init,
        resolutions=(args.ref_resolution, args.other_resolution),
        binary=not args.ascii,
    )
    pipeline.run()
    logger.info(f'合并地图已写入 {args.out}，报告 {args.report}')


def command_bench(args: argparse.Namespace) -> None:
    overrides = {'output_dir': args.out_dir, 'seed': args.seed, 'trials': args.trials}
    pipeline = BenchPipeline(args.config, overrides=overrides, max_concurrency=args.max_concurrency)
    paths = pipeline.run().get('paths')
    logger.info(f'实验结果: {paths}')


COMMANDS = {
    'register': command_register,
    'trim-register': command_register,
    'merge-maps': command_merge,
    'bench': command_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except DegenerateScaleError as e:
        logger.error(f'配准退化: {e}')
        return DEGENERACY_EXIT_CODE
    except MergeRejected as e:
        logger.error(f'合并被拒绝: {e}')
        return MERGE_REJECTED_EXIT_CODE
    except (ScaleRegError, ValidationError, ValueError, OSError) as e:
        logger.error(f'输入错误: {e}')
        return PARSE_ERROR_EXIT_CODE
    return 0


if __name__ == '__main__':
    start_time = time.time()
    exit_code = main()
    run_time = time.time() - start_time
    logger.info(f"总运行时间: {run_time:.6f} 秒")
    sys.exit(exit_code)
