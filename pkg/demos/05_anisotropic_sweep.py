"""Enumerate the feasible anisotropic target space for fixed diagonals.

With diagonals [0.3, 0.2, 0.1] and a 0.05 step, the pairwise bounds allow 96
off-diagonal combinations and the positive-determinant screen keeps 61.
Running all of them is `opentm gallery`; here we only enumerate and show the
spread of determinants.
"""

import numpy as np

from opentm.cli import enumerate_gallery_targets
from opentm.homogenize import ConductivityTensor

raw, feasible = enumerate_gallery_targets([0.3, 0.2, 0.1], step=0.05)
print(f"{len(raw)} raw combinations, {len(feasible)} feasible")

dets = sorted(
    ((float(np.linalg.det(ConductivityTensor(t).as_matrix())), t) for t in feasible),
    key=lambda pair: pair[0],
)
print("\nclosest to singular (hardest targets):")
for det, t in dets[:5]:
    print(f"  off-diagonals {t[3:]}  det {det:.2e}")
print("\nmost comfortably definite:")
for det, t in dets[-3:]:
    print(f"  off-diagonals {t[3:]}  det {det:.2e}")
