"""
Prescribing the circulation instead of the wall value
=====================================================

The elliptic problem behind the flow fixes how much the stream function
circulates around the side wall at every height, and leaves the value on the
wall free (one unknown constant per level).  This script solves it once and
looks at what comes out.
"""
import numpy as np

from qgcyl import BoundaryTriple, DomainSpec, build_basis, circulation_of, solve_variational, weak_circulation
from qgcyl.elliptic import compatibility_defect
from qgcyl.fields import CirculationProfile, SurfaceFieldPair, field_from_function

###############################################################################
# A rectangle of side pi, depth 1, and a vertical basis of degree 12.

hb, vb = build_basis(DomainSpec(), (24, 24), 12)

###############################################################################
# Interior source: a warm blob near the bottom, a cold one near the top.

def source(x, y, z):
    a = np.exp(-((x - 1.2) ** 2 + (y - 1.5) ** 2) / 0.2) * (1 - z)
    b = np.exp(-((x - 2.0) ** 2 + (y - 1.7) ** 2) / 0.2) * z
    return a - b


f = field_from_function(source, hb, vb)
g = SurfaceFieldPair.zeros(hb)

###############################################################################
# Choose the circulation so that the data balance: with no plate data the
# circulation at each height must equal the source integral at that height.

j = CirculationProfile(vb, f.level_integrals())
data = BoundaryTriple(f, g, j)
print(f"compatibility defect of the balanced data: {compatibility_defect(data):.2e}")

psi = solve_variational(data)
print("wall value per level (free unknown):", np.array2string(psi.trace()[::3], precision=4))
print(f"weak circulation error: {np.max(np.abs(weak_circulation(psi, f).values - j.values)):.2e}")
print(f"strong circulation error: {np.max(np.abs(circulation_of(psi).values - j.values)):.2e}")

###############################################################################
# The strong number differentiates a truncated sine series at the wall and
# converges slowly; the weak one reads the circulation through the equation.
#
# Now break the balance on purpose by adding a constant to the source.  The
# solve still succeeds: the mismatch shows up as a constant c with
# L(Psi) = f + c, and here c must cancel the added constant.

f_bad = f.add_constant(0.05)
bad = BoundaryTriple(f_bad, g, j)
psi_bad = solve_variational(bad)
c = compatibility_defect(bad)
print(f"defect c = {c:+.5f}")
weak = weak_circulation(psi_bad, f_bad, c).values
print(f"with f + c as the source the circulation still reads back as j: {np.max(np.abs(weak - j.values)):.1e}")
