"""Damped string: classify, derive, simulate, and compare the first mode with its ODE.

    python3 demos/damped_string.py
"""
import math

import numpy as np

from multicontact import lagrangian, simulate, structure
from multicontact.sysfile import bundled

sf = bundled("string")
print(structure.classify(sf.theta(), sf.chart))
print(lagrangian.herglotz_el_equations(sf.expr, sf.chart).normalized())

grid = simulate.GridState.uniform(256, 0.0, 2 * math.pi, np.sin)
traj = simulate.integrate_wave(sf.lagrangian_system(), grid, 4.0, params=sf.params, cfl=0.5)
a = simulate.mode_amplitude(traj, 1)
_, ref = simulate.rk4_scalar_reference(traj.coeffs.c**2, traj.coeffs.gamma, 1.0, 4.0, traj.dt / 10)
ref = ref[::10]
E = simulate.discrete_energy(traj)

print(f"{'t':>6} {'a_1(t)':>12} {'mode ODE':>12} {'energy':>12}")
for k in range(0, len(traj.t), len(traj.t) // 8):
    print(f"{traj.t[k]:6.2f} {a[k]:12.6f} {ref[k]:12.6f} {E[k]:12.6f}")
print(f"max |a_1 - ODE| = {np.max(np.abs(a - ref)):.2e}")
