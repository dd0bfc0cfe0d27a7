"""Gallery of the built-in seed patterns at a common volume fraction.

Prints each pattern's achieved mean density and a mid-plane ASCII slice, a
quick way to eyeball the lattice geometries before an optimization run.
"""

from opentm import InitPattern, init_density

N = 24
for kind in ("p", "d", "g", "iwp", "ball", "random"):
    fld = init_density((N, N, N), InitPattern(kind, 0.4, seed=3))
    print(f"\n{kind}: mean density {fld.mean():.3f}, mid-plane slice:")
    mid = fld.rho[:, :, N // 2]
    for row in mid:
        print("   " + "".join("#" if v > 0.5 else "." for v in row))
