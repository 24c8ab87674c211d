"""Walk the CFM56-7B take-off design through the cycle, station by station."""
from dataclasses import replace

import numpy as np

from svpen.turbofan import CFM56_7B, FixedParameters, simulate_turbofan

fixed = FixedParameters()
perf = simulate_turbofan(CFM56_7B, fixed)

print("CAC parameters")
for name, value in zip(CFM56_7B.__dataclass_fields__, CFM56_7B.as_array()):
    print(f"  {name:8s} {value:10.4g}")

print("\nstations (total temperature K, total pressure kPa)")
for station, (Tt, Pt) in perf.stations.items():
    print(f"  {station:>3s} {Tt:8.1f} {Pt / 1e3:9.1f}")

print("\nshaft work, MW")
for part, w in perf.works.items():
    print(f"  {part:4s} {w / 1e6:7.2f}")

# the external simulator quotes 126.83 kN and 11.22 g/(kN s) for the same inputs
print(f"\nthrust {perf.F:.2f} kN ({perf.F / 126.83 - 1:+.1%})")
print(f"TSFC   {perf.TSFC:.3f} g/(kN s) ({perf.TSFC / 11.22 - 1:+.1%})")
print(f"fuel   {perf.m_fuel:.3f} kg/s")

# a quick sensitivity sweep on burner exit temperature
print("\nT_max sweep")
for t_max in np.linspace(1500, 1800, 4):
    p = simulate_turbofan(replace(CFM56_7B, T_max=t_max), fixed)
    print(f"  {t_max:6.0f} K  F {p.F:7.2f} kN  TSFC {p.TSFC:6.3f}")
