"""CO2 absorption near 4.2 um from the shipped line list: desk vs reference physics.

The desk model keeps the in-band lines above a strength cutoff; the reference
model keeps every line and lets far wings leak in. The gap between the two is
what the mismatch scenario asks SVPEN to cope with.
"""
import numpy as np

from svpen.harness.scenarios import BAND_A, BAND_WIDE, desk_model, load_line_db, reference_model

db = load_line_db()
desk, ref = desk_model(db, BAND_A), reference_model(db, BAND_A)
print(f"{len(db)} lines in the file, {len(desk.active_db)} used by the desk model")

for T, X in ((600.0, 0.05), (1500.0, 0.06), (2000.0, 0.07)):
    a, b = desk((T, X)), ref((T, X))
    print(f"T {T:6.0f} K  X {X:.2f}  peak desk {a.max():.3f}  peak ref {b.max():.3f}  "
          f"max gap {np.abs(a - b).max():.3f}")

# a coarse text plot of one spectrum
alpha = desk((1500.0, 0.06))
v = BAND_A.wavenumbers
for i in range(0, len(v), 8):
    print(f"{v[i]:8.1f} {'#' * int(60 * alpha[i])}")

# the same state in emission over the wide band
em = desk_model(db, BAND_WIDE, "emission")((3000.0, 0.3))
print(f"\nemission 2330-2370: {em.size} points, max {em.max():.3e} W/(m^2 sr m^-1)")
