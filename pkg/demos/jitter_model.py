"""
Walk through the analytic jitter model for the tungsten device.

Starts from the nominal parameters, shows how the pieces combine into a
jitter FWHM, then scans the inductance over the uncertainty box and looks
for the best and worst corners.

Run with ``python3 demos/jitter_model.py``.
"""

import numpy as np

from tesjitter import device_model as dm
from tesjitter.device_model import EV, DeviceParams, ParamRange

NS = 1e-9

p = DeviceParams.nominal()
print("nominal device")
print(f"  alpha={p.alpha:g}  beta={p.beta:g}  M_J={p.m_j:g}  eta={p.eta:g}  "
      f"photon {p.photon_energy / EV:.2f} eV  L={p.inductance / NS:g} nH")

# the building blocks
print(f"  bias power P0        {dm.equilibrium_power(p):.4e} W")
print(f"  heat capacity C      {dm.heat_capacity(p):.4e} J/K")
print(f"  current step dI      {dm.delta_current(p):.4e} A")
print(f"  current noise I_rms  {dm.rms_noise(p):.4e} A")
print(f"  rise times: electrical {dm.electrical_rise_time(p) / NS:.2f} ns, "
      f"amplifier {dm.external_rise_time(p) / NS:.2f} ns, "
      f"combined {dm.combined_rise_time(p) / NS:.2f} ns")
print(f"  jitter FWHM          {dm.predicted_jitter_fwhm(p) / NS:.4f} ns")

# a faster amplifier moves the optimum to lower inductance
print("\noptimal inductance")
for bw in (20e6, 35e6, 100e6):
    q = p.replace(amp_bandwidth=bw)
    res = dm.optimal_inductance(q, (1e-10, 1e-6))
    print(f"  {bw / 1e6:5.0f} MHz: L* = {res.inductance / NS:6.2f} nH "
          f"(analytic {dm.analytic_optimal_inductance(q) / NS:6.2f} nH), "
          f"jitter there {dm.predicted_jitter_fwhm(q.replace(inductance=res.inductance)) / NS:.3f} ns")

# uncertainty box: envelope over inductance
table = ParamRange.nominal()
grid = np.linspace(5e-9, 100e-9, 20)
env = dm.jitter_envelope(table, grid)
print("\nenvelope over the parameter box")
print("   L [nH]   lower [ns]   upper [ns]")
for L, lo, hi in zip(grid, env.lower, env.upper):
    print(f"  {L / NS:7.1f}   {lo / NS:9.3f}   {hi / NS:9.2f}")
print(f"  lower edge is smallest at {env.argmin_lower / NS:.1f} nH")

lo, hi = dm.corner_extremes(table)
for name, c in (("best", lo), ("worst", hi)):
    q = c.params
    print(f"{name} corner: {c.value / NS:7.3f} ns at alpha={q.alpha:g} beta={q.beta:g} "
          f"M_J={q.m_j:g} eta={q.eta:g} L={q.inductance / NS:g} nH")
