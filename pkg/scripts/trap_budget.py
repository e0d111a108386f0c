"""Trap depth, trap frequencies and fluorescence count budget."""

import numpy as np

from metatweezer.tweezer import (METALENS_CHANNEL, OBJECTIVE_CHANNEL, collection_efficiency,
                                 count_ratio, trap_parameters)
from metatweezer.propagation import gaussian_reference_zr

w0, lam = 1.33e-6, 852e-9
for cr in (False, True):
    t = trap_parameters(15.9e-3, 0.33, w0, gaussian_reference_zr(w0, lam), lam,
                        counter_rotating=cr)
    print(f"counter-rotating={cr!s:5s}  depth {t.depth_mk:.3f} mK  "
          f"f_r {t.omega_radial / 2 / np.pi / 1e3:.1f} kHz  f_z {t.omega_axial / 2 / np.pi / 1e3:.1f} kHz")

for p in np.arange(4e-3, 22e-3, 2e-3):
    t = trap_parameters(p, 0.33, w0, gaussian_reference_zr(w0, lam), lam)
    print(f"P = {p * 1e3:5.1f} mW  depth {t.depth_mk:.3f} mK")

for na in (0.28, 0.46):
    print(f"NA {na}: isotropic {collection_efficiency(na):.4f}, "
          f"circular dipole {collection_efficiency(na, 'circular-dipole'):.4f}")
print(f"expected metalens/objective count ratio {count_ratio(METALENS_CHANNEL, OBJECTIVE_CHANNEL):.3f}")
