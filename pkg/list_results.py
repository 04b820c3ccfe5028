import os
import sys
import json


def read_summary(file_path: str):
    with open(file_path, 'r', encoding='utf-8') as f:
        return json.load(f)


def fmt(value, spec: str = '.3e') -> str:
    return '-' if value is None else format(value, spec)


def print_summary(data):
    print(data['spec']['name'])
    for row in data['summary']:
        print(
            f"  {row['algorithm']:<16} 试验 {row['trials']:>3}  失败 {row['failed']:>3}  "
            f"MSE 均值 {fmt(row['mean_mse'])}  中位数 {fmt(row['median_mse'])}  "
            f"尺度误差 {fmt(row['mean_scale_error'])}  耗时 {fmt(row['mean_wall_time'], '.4f')}s"
        )
    print()


def main(root: str):
    for dirpath, _, filenames in sorted(os.walk(root)):
        if 'summary.json' in filenames:
            print_summary(read_summary(os.path.join(dirpath, 'summary.json')))


if __name__ == '__main__':
    main(sys.argv[1] if len(sys.argv) > 1 else 'bench_out')
