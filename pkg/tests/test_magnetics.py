import warnings

import numpy as np
import pytest
from conftest import rel
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import mu_0
from scipy.integrate import solve_ivp

from ionmagic import (
    CA40,
    CircuitGeometry,
    DomainError,
    MathieuMatrices,
    Segment,
    Sheet,
    field_at,
    gradient_of_magnitude,
    gradient_profile,
    loop_chip_geometry,
    secular_frequencies,
    u_chip_geometry,
)
from ionmagic.constants import TWO_PI
from ionmagic.magnetics import field_jacobian

ION = np.array([0.0, 164e-6, 0.0])


def wire(length=1.0, current=1.0):
    return CircuitGeometry([Segment((0, 0, -length / 2), (0, 0, length / 2), current)])


def square_loop(side=1.0, current=1.0):
    h = side / 2
    c = [(-h, -h, 0), (h, -h, 0), (h, h, 0), (-h, h, 0)]
    return CircuitGeometry([Segment(c[k], c[(k + 1) % 4], current) for k in range(4)])


# -- Biot-Savart oracles --------------------------------------------------------------------


def test_long_wire_field():
    B = field_at([1e-3, 0, 0], wire())
    assert np.linalg.norm(B) == pytest.approx(mu_0 / (2 * np.pi * 1e-3), rel=1e-5)
    # right-hand rule: current along +z, field along +y at +x
    assert B[1] > 0 and abs(B[0]) < 1e-20 and abs(B[2]) < 1e-20


def test_finite_wire_closed_form():
    # on the perpendicular bisector: B = mu0 I/(4 pi r) * 2 (L/2)/sqrt(r^2 + L^2/4)
    r, L = 0.3, 1.0
    expected = mu_0 / (4 * np.pi * r) * L / np.hypot(r, L / 2)
    assert np.linalg.norm(field_at([r, 0, 0], wire(L))) == pytest.approx(expected, rel=1e-12)


def test_square_loop_centre():
    a, I = 2.0, 3.0
    B = field_at([0, 0, 0], square_loop(a, I))
    assert B[2] == pytest.approx(2 * np.sqrt(2) * mu_0 * I / (np.pi * a), rel=1e-12)
    assert np.abs(B[:2]).max() < 1e-20


def test_square_loop_on_axis_quadrature():
    # independent oracle: Biot-Savart line integral by dense midpoint quadrature
    geo = square_loop(1.0, 2.0)
    p = np.array([0.1, -0.2, 0.35])
    A, B, I = geo.filaments()
    total = np.zeros(3)
    t = (np.arange(20000) + 0.5) / 20000
    for a, b, i in zip(A, B, I):
        pts = a + t[:, None] * (b - a)
        dl = (b - a) / len(t)
        r = p - pts
        total += mu_0 * i / (4 * np.pi) * np.sum(np.cross(dl, r) / np.linalg.norm(r, axis=1)[:, None] ** 3, axis=0)
    assert np.abs(field_at(p, geo) - total).max() < 1e-8 * np.linalg.norm(total)


def test_field_on_filament_raises():
    with pytest.raises(DomainError):
        field_at([0, 0, 0.1], wire())
    # beyond the segment end on its extension line the field is exactly zero
    assert np.all(field_at([0, 0, 0.6], wire()) == 0)


def test_empty_geometry_has_no_field():
    assert np.all(field_at(np.ones((4, 3)), CircuitGeometry()) == 0)


def test_vectorized_matches_single(rng):
    geo = loop_chip_geometry(filaments=4)
    P = rng.uniform(-3e-4, 3e-4, size=(7, 3)) + [0, 4e-4, 0]
    many = field_at(P, geo)
    for p, b in zip(P, many):
        assert np.allclose(field_at(p, geo), b, rtol=1e-13, atol=0)


# -- properties -----------------------------------------------------------------------------


def test_superposition():
    a = loop_chip_geometry(4, 0, filaments=8)
    b = loop_chip_geometry(0, -10, filaments=8)
    both = loop_chip_geometry(4, -10, filaments=8)
    assert np.allclose(field_at(ION, a) + field_at(ION, b), field_at(ION, both), rtol=1e-12, atol=0)
    assert np.allclose(field_at(ION, a + b), field_at(ION, both), rtol=1e-12, atol=0)


@settings(max_examples=25, deadline=None)
@given(i1=st.floats(-6, 6), i2=st.floats(-10, 10), k=st.floats(-5, 5))
def test_current_linearity(i1, i2, k):
    geo = loop_chip_geometry(i1, i2, filaments=4)
    B = field_at(ION, geo)
    scaled = field_at(ION, geo.scaled(k))
    assert np.allclose(scaled, k * B, rtol=1e-12, atol=1e-22)


def test_current_reversal_flips_field_not_gradient_magnitude():
    geo = loop_chip_geometry()
    B = field_at(ION, geo)
    assert np.allclose(field_at(ION, geo.scaled(-1)), -B, rtol=1e-14, atol=0)
    g = gradient_of_magnitude(ION, geo)
    assert np.allclose(gradient_of_magnitude(ION, geo.scaled(-1)), g, rtol=1e-9)


def test_with_currents_by_name():
    geo = loop_chip_geometry(4, -10).with_currents({"W1": 0.0})
    assert np.allclose(field_at(ION, geo), field_at(ION, loop_chip_geometry(0, -10)), rtol=1e-13)
    with pytest.raises((KeyError, ValueError)):
        geo.with_currents({"W9": 1.0})


@pytest.mark.parametrize("point", [ION, [30e-6, 80e-6, 120e-6], [-200e-6, 50e-6, -90e-6]])
def test_divergence_free(point):
    geo = loop_chip_geometry()
    Jac = field_jacobian(point, geo)
    assert abs(np.trace(Jac)) < 1e-6 * np.abs(Jac).max()
    # the circuit is open (runs end at +-5 mm, and the 100 um wire hands its
    # current to the 50 um loop without a routed junction), so the curl is
    # only approximately zero; the divergence is exact for any filament set
    assert np.abs(Jac - Jac.T).max() < 0.02 * np.abs(Jac).max()


def test_closed_loop_is_curl_free():
    Jac = field_jacobian([0.1, 0.2, 0.3], square_loop())
    assert abs(np.trace(Jac)) < 1e-6 * np.abs(Jac).max()
    assert np.abs(Jac - Jac.T).max() < 1e-6 * np.abs(Jac).max()


def test_filament_refinement_converges():
    g = {n: gradient_of_magnitude(ION, loop_chip_geometry(filaments=n)) for n in (8, 16, 32, 64)}
    for n in (8, 16, 32):
        assert np.linalg.norm(g[n] - g[64]) < 0.02 * np.linalg.norm(g[64])
    assert np.linalg.norm(g[32] - g[64]) < np.linalg.norm(g[8] - g[64])


def test_sheet_filaments_parallel_at_corners():
    sheet = Sheet([(0, 0, 0), (0, 0, 1), (1, 0, 1)], 0.2, 1.0, filaments=4)
    segs = sheet.segments()
    assert len(segs) == 8
    assert sum(s.current for s in segs) == pytest.approx(2.0)
    for s in segs[::2]:
        assert s.start[0] == pytest.approx(s.end[0])  # first piece stays along z
    for s in segs[1::2]:
        assert s.start[2] == pytest.approx(s.end[2])  # second piece stays along x


def test_thin_sheet_approaches_wire():
    far = np.array([0.05, 0.02, 0.0])
    sheet = CircuitGeometry((), (Sheet([(0, 0, -1), (0, 0, 1)], 1e-4, 2.0, 8),))
    line = CircuitGeometry([Segment((0, 0, -1), (0, 0, 1), 2.0)])
    assert rel(field_at(far, sheet), field_at(far, line)) < 1e-5


def test_gradient_null_raises_and_profile_zero():
    geo = loop_chip_geometry(0.0, 0.0)
    with pytest.raises(DomainError, match="null"):
        gradient_of_magnitude(ION, geo)
    prof = gradient_profile("z", (-1e-4, 1e-4), 5, geo, origin=ION, on_null="zero")
    assert np.all(prof.null) and np.all(prof.gradient == 0)
    with pytest.raises(DomainError):
        gradient_profile("z", (-1e-4, 1e-4), 5, geo, origin=ION)


def test_profile_argument_validation():
    geo = loop_chip_geometry()
    with pytest.raises(ValueError):
        gradient_profile("w", (0, 1e-4), 5, geo)
    with pytest.raises(ValueError):
        gradient_profile("z", (0, 1e-4), 1, geo)
    with pytest.raises(ValueError):
        gradient_profile("z", (0, 1e-4), 5, geo, on_null="ignore")


def test_gradient_matches_jacobian_projection():
    geo = loop_chip_geometry()
    B = field_at(ION, geo)
    expected = field_jacobian(ION, geo).T @ B / np.linalg.norm(B)
    assert np.allclose(gradient_of_magnitude(ION, geo), expected, rtol=1e-6)


# -- chip layouts ---------------------------------------------------------------------------


def test_antisymmetric_drive_has_odd_z_profile():
    geo = loop_chip_geometry(10, -10)
    prof = gradient_profile("z", (-600e-6, 600e-6), 61, geo, origin=ION)
    gz = prof.gradient[:, 2]
    # |B| is even in z, so its z-derivative is odd
    assert np.allclose(gz, -gz[::-1], atol=1e-6 * np.abs(gz).max())
    assert abs(gz[30]) < 1e-6 * np.abs(gz).max()
    # two opposite extrema near the loop edges
    assert prof.coordinate[np.argmax(gz)] * prof.coordinate[np.argmin(gz)] < 0


def test_loop_chip_profile_structure():
    prof = gradient_profile("z", (-600e-6, 600e-6), 121, loop_chip_geometry(), origin=ION)
    gx, gy = prof.gradient[:, 0], prof.gradient[:, 1]
    mid = 60
    # the loop pulls W1 current away from the ion: the x-gradient dips and
    # the vertical gradient grows above the loop, both even in z
    assert abs(gx[mid]) < 0.6 * abs(gx).max()
    assert abs(gy[mid]) == pytest.approx(abs(gy).max())
    assert np.allclose(gx, gx[::-1], rtol=1e-6) and np.allclose(gy, gy[::-1], rtol=1e-6)
    # far from the loop the straight-wire plateau is recovered
    assert abs(gx[0] - gx[10]) < 0.02 * abs(gx[0])


def test_u_chip_gradient_points_along_height():
    geo = u_chip_geometry()
    g = gradient_of_magnitude([0, 400e-6, 0], geo)
    assert abs(g[1]) > 10 * max(abs(g[0]), abs(g[2]))
    # gradient magnitude falls off far from the chip
    assert abs(gradient_of_magnitude([0, 1.5e-3, 0], geo)[1]) < abs(g[1])


def test_geometry_round_trip(tmp_path):
    geo = loop_chip_geometry(3.0, -7.0, filaments=6)
    path = tmp_path / "g.yaml"
    geo.save(path)
    back = CircuitGeometry.load(path)
    assert back == geo
    assert np.array_equal(field_at(ION, back), field_at(ION, geo))


def test_checked_in_geometries_load():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "geometries"
    loop = CircuitGeometry.load(root / "loop_chip.yaml")
    u = CircuitGeometry.load(root / "u_chip.yaml")
    assert np.allclose(field_at(ION, loop), field_at(ION, loop_chip_geometry()), rtol=1e-12)
    assert np.allclose(field_at(ION, u), field_at(ION, u_chip_geometry()), rtol=1e-12)


def test_geometry_units_checked():
    d = loop_chip_geometry(filaments=2).to_dict()
    d["units"] = {"length": "mm", "current": "A"}
    with pytest.raises(ValueError):
        CircuitGeometry.from_dict(d)


def test_invalid_segments():
    with pytest.raises(ValueError):
        Segment((0, 0, 0), (0, 0, 0), 1.0)
    with pytest.raises(ValueError):
        Sheet([(0, 0, 0)], 1e-4, 1.0)
    with pytest.raises(ValueError):
        Sheet([(0, 0, 0), (0, 0, 1)], -1e-4, 1.0)


# -- secular frequencies --------------------------------------------------------------------


def floquet_exponent(a, q):
    """Characteristic exponent of x'' + (a + 2 q cos 2 tau) x = 0 from the monodromy matrix."""

    def rhs(t, y):
        return [y[1], -(a + 2 * q * np.cos(2 * t)) * y[0]]

    cols = []
    for y0 in ([1.0, 0.0], [0.0, 1.0]):
        sol = solve_ivp(rhs, (0, np.pi), y0, rtol=1e-12, atol=1e-14, method="DOP853")
        cols.append(sol.y[:, -1])
    tr = np.trace(np.array(cols).T)
    return np.arccos(np.clip(tr / 2, -1, 1)) / np.pi


def mathieu(a, q, Omega=TWO_PI * 30e6):
    return MathieuMatrices(np.diag(a), np.diag(q), Omega)


def test_secular_matches_floquet_oracle():
    a = np.array([-0.002, 0.004, -0.002])
    q = np.array([0.2, -0.2, 0.0])
    sf = secular_frequencies(mathieu(a, q))
    assert sf.lowest_order_valid
    for i in range(2):
        beta = floquet_exponent(a[i], q[i])
        # lowest order in q, a: agreement to a few percent at q = 0.2
        assert sf.kappa[i] == pytest.approx(beta, rel=0.03)
    assert sf.frequencies[0] == pytest.approx(sf.kappa[0] * 30e6 / 2, rel=1e-12)


def test_secular_error_shrinks_with_q():
    errs = []
    for q in (0.1, 0.2, 0.3):
        sf = secular_frequencies(mathieu([0.001, -0.001, 0.0], [q, -q, 0.0]))
        errs.append(abs(sf.kappa[0] / floquet_exponent(0.001, q) - 1))
    assert errs[0] < errs[1] < errs[2]


def test_secular_flags_unstable_axis():
    sf = secular_frequencies(mathieu([0.02, -0.01, -0.01], [0.0, 0.1, -0.1]))
    assert sf.unstable.tolist() == [False, False, True] or sf.unstable.tolist() == [False, True, True]
    assert np.all(sf.frequencies[sf.unstable] < 0)


def test_secular_warns_outside_validity():
    with pytest.warns(RuntimeWarning):
        sf = secular_frequencies(mathieu([0.0, 0.0, 0.0], [0.6, -0.6, 0.0]))
    assert not sf.lowest_order_valid


def test_mathieu_traces_and_symmetry():
    with pytest.raises(DomainError, match="Laplace"):
        mathieu([0.01, 0.0, 0.0], [0.1, -0.1, 0.0])
    with pytest.raises(ValueError):
        MathieuMatrices(np.triu(np.ones((3, 3))) - np.eye(3), np.zeros((3, 3)), 1.0)
    # the check can be disabled for a non-Laplacian effective model
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        secular_frequencies(MathieuMatrices(np.diag([0.01, 0, 0]), np.zeros((3, 3)), 1.0, check_laplace=False))


def test_off_diagonal_mathieu_raises():
    A = np.array([[0.001, 0.0005, 0], [0.0005, -0.001, 0], [0, 0, 0]])
    with pytest.raises(DomainError, match="diagonal"):
        secular_frequencies(MathieuMatrices(A, np.zeros((3, 3)), 1.0))


def test_from_curvatures_scaling():
    Omega = TWO_PI * 20e6
    k = CA40.charge / (CA40.mass * Omega**2)
    mm = MathieuMatrices.from_curvatures(np.diag([1e6, 1e6, -2e6]), np.diag([1e8, -1e8, 0]), CA40, Omega)
    assert mm.A[2, 2] == pytest.approx(-8e6 * k)
    assert mm.Q[0, 0] == pytest.approx(2e8 * k)
