import os
import sys
import json

from scalereg.gridmap import save_pgm
from scalereg.harness import generate_case, synthetic_map_pair
from scalereg.pointio import write_points
from scalereg.registration.schema import ExperimentSpec


if __name__ == '__main__':
    if len(sys.argv) != 2:
        print("Usage: python3 prepare.py <output_dir>")
        sys.exit(1)

    output_dir = sys.argv[1]
    os.makedirs(output_dir, exist_ok=True)

    # 完全重叠和 30% 遮挡的点集各一对
    for name, occlusion in (('full', 0.0), ('occluded', 0.3)):
        spec = ExperimentSpec(name=name, occlusion=occlusion, seed=7, trials=1)
        case = generate_case(spec, 0)
        write_points(case.P, os.path.join(output_dir, f'{name}_P.txt'))
        write_points(case.Q, os.path.join(output_dir, f'{name}_Q.txt'))
        with open(os.path.join(output_dir, f'{name}_truth.json'), 'w', encoding='utf-8') as f:
            json.dump({**case.truth.to_dict(), 'overlap': case.true_xi}, f, ensure_ascii=False, indent=2)

    # 栅格地图对，other 的栅格边长是 reference 的 1.25 倍
    reference, other, truth = synthetic_map_pair()
    save_pgm(reference, os.path.join(output_dir, 'reference.pgm'))
    save_pgm(other, os.path.join(output_dir, 'other.pgm'))
    with open(os.path.join(output_dir, 'map_truth.json'), 'w', encoding='utf-8') as f:
        json.dump(truth.to_dict(), f, ensure_ascii=False, indent=2)
