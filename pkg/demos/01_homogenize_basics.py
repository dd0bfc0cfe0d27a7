"""Effective conductivity of simple periodic cells.

Three cells with known answers: a solid cube, a half-and-half laminate whose
in-plane and through-plane conductivities are the arithmetic and harmonic
mixture rules, and a gyroid lattice at half volume.
"""

import numpy as np

from opentm import GridHierarchy, InitPattern, MaterialParams, homogenize, init_density

mp = MaterialParams(kappa0=1.0, kappa_min=1e-4, penalty=1.0)

# solid cube: the tensor is the solid conductivity times the identity
h = GridHierarchy((16, 16, 16), dtype="float64")
res = homogenize(h, np.ones((16, 16, 16)), mp)
print("solid cube:")
print(np.round(res.tensor.as_matrix(), 6))

# laminate along z: parallel (arithmetic) in plane, series (harmonic) across
n = 32
rho = np.zeros((n, n, n))
rho[:, :, : n // 2] = 1.0
h = GridHierarchy((n, n, n), dtype="float64")
res = homogenize(h, rho, mp, tol=1e-9)
arith = 0.5 * (mp.kappa0 + mp.kappa_min)
harm = 2 * mp.kappa0 * mp.kappa_min / (mp.kappa0 + mp.kappa_min)
print("\nlaminate: k11 = %.6f (arithmetic %.6f), k33 = %.3e (harmonic %.3e)"
      % (res.tensor.vec[0], arith, res.tensor.vec[2], harm))

# gyroid lattice at 50% volume: cubic-symmetric, well below the solid value
fld = init_density((32, 32, 32), InitPattern("g", 0.5))
h = GridHierarchy((32, 32, 32), dtype="float64")
res = homogenize(h, fld.rho, mp)
print("\ngyroid at volume %.3f:" % fld.mean())
print(np.round(res.tensor.as_matrix(), 4))
