"""Magnetic fields of planar chip conductors and secular trap frequencies.

Coordinates follow the trap: the chip surface is the plane ``y = 0``, ``z``
is the trap axis and ``x`` the in-plane transverse direction. Conductors are
straight current filaments, either given directly or generated by splitting a
flat sheet (a polyline centreline with a width) into parallel filaments that
share the current equally.
"""

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from ._validation import check_positive, check_positive_int, check_vector3
from ._yaml import load_yaml
from .constants import MU_0, TWO_PI
from .exceptions import DomainError

# Points closer than this to a filament (relative to its length) are "on" it.
ON_FILAMENT_RTOL = 1e-9
# |B| below this (T) is treated as a field null.
FIELD_NULL_TOL = 1e-12
DEFAULT_STEP = 1e-7

_AXIS = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class Segment:
    """Straight current filament from ``start`` to ``end`` (m), current in A."""

    start: tuple
    end: tuple
    current: float
    name: str = ""

    def __post_init__(self):
        a = check_vector3(self.start, "segment start")
        b = check_vector3(self.end, "segment end")
        if not np.linalg.norm(b - a) > 0:
            raise ValueError("segment has zero length")
        object.__setattr__(self, "start", tuple(float(v) for v in a))
        object.__setattr__(self, "end", tuple(float(v) for v in b))
        object.__setattr__(self, "current", float(self.current))


@dataclass(frozen=True)
class Sheet:
    """Flat conductor of finite width following a polyline in the chip plane.

    Parameters
    ----------
    corners : sequence of 3-vectors
        Centreline vertices in m. Consecutive vertices must differ.
    width : float
        Conductor width in m, measured in the chip plane.
    current : float
        Total current in A, flowing from the first vertex to the last.
    filaments : int
        Number of parallel filaments; each carries ``current / filaments``,
        which models a piecewise homogeneous current density.
    """

    corners: tuple
    width: float
    current: float
    filaments: int = 16
    name: str = ""

    def __post_init__(self):
        P = np.asarray(self.corners, dtype=float)
        if P.ndim != 2 or P.shape[1] != 3 or len(P) < 2 or not np.all(np.isfinite(P)):
            raise ValueError("sheet corners must be at least two finite 3-vectors")
        if np.any(np.linalg.norm(np.diff(P, axis=0), axis=1) == 0):
            raise ValueError("sheet has a zero-length piece")
        check_positive(self.width, "sheet width")
        check_positive_int(self.filaments, "filaments")
        object.__setattr__(self, "corners", tuple(tuple(float(v) for v in p) for p in P))
        object.__setattr__(self, "current", float(self.current))

    def segments(self):
        """Split the sheet into ``filaments`` polylines.

        Each filament is the centreline offset in the chip plane (normal
        ``y_hat x t``); at corners the offset follows the miter direction so
        that filaments stay parallel to every piece.
        """
        P = np.asarray(self.corners)
        t = np.diff(P, axis=0)
        t /= np.linalg.norm(t, axis=1)[:, None]
        nrm = np.cross([0.0, 1.0, 0.0], t)
        off = np.empty_like(P)
        off[0], off[-1] = nrm[0], nrm[-1]
        for k in range(1, len(P) - 1):
            off[k] = (nrm[k - 1] + nrm[k]) / (1.0 + nrm[k - 1] @ nrm[k])
        fractions = (np.arange(self.filaments) + 0.5) / self.filaments - 0.5
        I = self.current / self.filaments
        out = []
        for f in fractions:
            Q = P + f * self.width * off
            out.extend(Segment(a, b, I, self.name) for a, b in zip(Q[:-1], Q[1:]))
        return out


@dataclass(frozen=True)
class CircuitGeometry:
    """Immutable collection of filaments and sheets."""

    segments: tuple = ()
    sheets: tuple = ()
    description: str = ""
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "sheets", tuple(self.sheets))

    def filaments(self):
        """All filaments as arrays ``(starts, ends, currents)``."""
        if "filaments" not in self._cache:
            segs = list(self.segments)
            for s in self.sheets:
                segs.extend(s.segments())
            if segs:
                A = np.array([s.start for s in segs])
                B = np.array([s.end for s in segs])
                I = np.array([s.current for s in segs])
            else:
                A = B = np.zeros((0, 3))
                I = np.zeros(0)
            self._cache["filaments"] = (A, B, I)
        return self._cache["filaments"]

    @property
    def names(self):
        return sorted({e.name for e in (*self.segments, *self.sheets) if e.name})

    def with_currents(self, currents):
        """Copy with the current of every named element replaced.

        ``currents`` maps element name to current in A.
        """
        unknown = set(currents) - set(self.names)
        if unknown:
            raise KeyError(f"no conductor named {sorted(unknown)}; available: {self.names}")

        def upd(e):
            return replace(e, current=float(currents[e.name])) if e.name in currents else e

        return CircuitGeometry(
            tuple(upd(s) for s in self.segments), tuple(upd(s) for s in self.sheets), self.description
        )

    def scaled(self, factor):
        """Copy with every current multiplied by ``factor``."""
        return CircuitGeometry(
            tuple(replace(s, current=s.current * factor) for s in self.segments),
            tuple(replace(s, current=s.current * factor) for s in self.sheets),
            self.description,
        )

    def with_filaments(self, n):
        return CircuitGeometry(self.segments, tuple(replace(s, filaments=n) for s in self.sheets), self.description)

    def union(self, other):
        return CircuitGeometry(self.segments + other.segments, self.sheets + other.sheets, self.description)

    __add__ = union

    # -- file format ---------------------------------------------------------------

    def to_dict(self):
        d = {
            "units": {"length": "m", "current": "A"},
            "segments": [
                {"start": list(s.start), "end": list(s.end), "current": s.current, **({"name": s.name} if s.name else {})}
                for s in self.segments
            ],
            "sheets": [
                {
                    "corners": [list(p) for p in s.corners],
                    "width": s.width,
                    "current": s.current,
                    "filaments": s.filaments,
                    **({"name": s.name} if s.name else {}),
                }
                for s in self.sheets
            ],
        }
        if self.description:
            d["description"] = self.description
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ValueError("geometry must be a mapping with 'segments' and/or 'sheets'")
        extra = set(d) - {"segments", "sheets", "description", "units"}
        if extra:
            raise ValueError(f"unknown geometry keys: {sorted(extra)}")
        units = d.get("units", {"length": "m", "current": "A"})
        if units != {"length": "m", "current": "A"}:
            raise ValueError(f"geometry units must be metres and amperes, got {units}")
        segs, sheets = [], []
        for k, s in enumerate(d.get("segments") or []):
            try:
                segs.append(Segment(s["start"], s["end"], s["current"], s.get("name", "")))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"segments[{k}]: {exc}") from None
        for k, s in enumerate(d.get("sheets") or []):
            try:
                sheets.append(Sheet(s["corners"], s["width"], s["current"], s.get("filaments", 16), s.get("name", "")))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"sheets[{k}]: {exc}") from None
        return cls(tuple(segs), tuple(sheets), d.get("description", ""))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                data = load_yaml(fh)
            except yaml.YAMLError as exc:
                raise ValueError(f"{path}: {exc}") from None
        try:
            return cls.from_dict(data)
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None

    def save(self, path, header=None):
        text = yaml.safe_dump(self.to_dict(), sort_keys=False)
        lines = [f"# {h}" for h in (header or "").splitlines()]
        lines.append("# Lengths in metres, currents in amperes. Chip surface is y = 0, trap axis is z.")
        Path(path).write_text("\n".join(lines) + "\n" + text, encoding="utf-8")


# -- Biot-Savart -----------------------------------------------------------------------


def _segment_fields(P, A, B, I, check=True):
    """Field of each filament at each point, shape (n_points, 3).

    Closed form for a finite straight filament, written with the vectors
    ``r1 = P - A`` and ``r2 = P - B``:
    ``mu0 I / 4 pi * (r1 x r2)(|r1| + |r2|) / (|r1||r2|(|r1||r2| + r1.r2))``.
    """
    r1 = P[:, None, :] - A[None]
    r2 = P[:, None, :] - B[None]
    n1 = np.linalg.norm(r1, axis=-1)
    n2 = np.linalg.norm(r2, axis=-1)
    if check:
        L = B - A
        L2 = np.einsum("fk,fk->f", L, L)
        t = np.clip(np.einsum("pfk,fk->pf", r1, L) / L2, 0.0, 1.0)
        dist = np.linalg.norm(r1 - t[..., None] * L, axis=-1)
        bad = dist <= ON_FILAMENT_RTOL * np.sqrt(L2)
        if np.any(bad):
            p = int(np.argwhere(bad)[0, 0])
            raise DomainError(f"field evaluated on a current filament at point {P[p].tolist()}")
    cross = np.cross(r1, r2)
    den = n1 * n2 * (n1 * n2 + np.einsum("pfk,pfk->pf", r1, r2))
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(den > 0, (n1 + n2) / den, 0.0)
    return MU_0 / (4 * np.pi) * np.einsum("pf,pfk->pk", I * factor, cross)


def field_at(point, geometry, chunk=2048):
    """Magnetic field (T) of ``geometry`` at one point or an array of points.

    Parameters
    ----------
    point : array-like, shape (3,) or (n, 3)
        Position(s) in m.
    geometry : CircuitGeometry

    Returns
    -------
    ndarray
        Same leading shape as ``point``.

    Raises
    ------
    DomainError
        If a point lies on a filament.
    """
    P = np.asarray(point, dtype=float)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    if P.shape[-1] != 3 or not np.all(np.isfinite(P)):
        raise ValueError("points must be finite 3-vectors")
    A, B, I = geometry.filaments()
    out = np.zeros_like(P)
    if len(I):
        step = max(1, chunk * 64 // max(len(I), 1))
        for k in range(0, len(P), step):
            out[k:k + step] = _segment_fields(P[k:k + step], A, B, I)
    return out[0] if single else out


def _distance_to_filaments(p, geometry):
    A, B, _ = geometry.filaments()
    if not len(A):
        return np.inf
    L = B - A
    t = np.clip(np.einsum("fk,fk->f", p - A, L) / np.einsum("fk,fk->f", L, L), 0, 1)
    return float(np.linalg.norm(p - A - t[:, None] * L, axis=1).min())


def gradient_of_magnitude(point, geometry, step=DEFAULT_STEP):
    """Gradient of ``|B|`` (T/m) by central differences.

    The step is ``step`` m, shrunk to a thousandth of the distance to the
    nearest filament when that is closer.

    Raises
    ------
    DomainError
        At a field null, where the gradient of the magnitude is undefined.
    """
    p = check_vector3(point, "point")
    h = min(step, 1e-3 * _distance_to_filaments(p, geometry))
    if np.linalg.norm(field_at(p, geometry)) <= FIELD_NULL_TOL:
        raise DomainError("gradient of magnitude undefined at field null")
    stencil = np.concatenate([p + h * np.eye(3), p - h * np.eye(3)])
    mag = np.linalg.norm(field_at(stencil, geometry), axis=1)
    return (mag[:3] - mag[3:]) / (2 * h)


def field_jacobian(point, geometry, step=DEFAULT_STEP):
    """``dB_i/dx_j`` by central differences, shape (3, 3)."""
    p = check_vector3(point, "point")
    h = min(step, 1e-3 * _distance_to_filaments(p, geometry))
    stencil = np.concatenate([p + h * np.eye(3), p - h * np.eye(3)])
    F = field_at(stencil, geometry)
    return ((F[:3] - F[3:]) / (2 * h)).T


@dataclass(frozen=True)
class GradientProfile:
    """Samples of ``B`` and ``grad |B|`` along a line.

    ``null`` marks samples at a field null, where the gradient is set to
    zero when profiling with ``on_null="zero"``.
    """

    axis: str
    coordinate: np.ndarray
    points: np.ndarray
    field: np.ndarray
    gradient: np.ndarray
    null: np.ndarray


def gradient_profile(axis, bounds, samples, geometry, origin=(0.0, 0.0, 0.0), on_null="raise"):
    """Sample ``B`` and ``grad |B|`` along a line parallel to one axis.

    Parameters
    ----------
    axis : {"x", "y", "z"}
    bounds : (float, float)
        Start and stop coordinate in m along ``axis``.
    samples : int
        At least 2.
    geometry : CircuitGeometry
    origin : 3-vector
        Fixes the other two coordinates.
    on_null : {"raise", "zero"}
        What to do at a field null.
    """
    if axis not in _AXIS:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    if isinstance(samples, bool) or int(samples) != samples or samples < 2:
        raise ValueError(f"samples must be an integer >= 2, got {samples!r}")
    if on_null not in ("raise", "zero"):
        raise ValueError("on_null must be 'raise' or 'zero'")
    lo, hi = (float(v) for v in bounds)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("bounds must be finite")
    s = np.linspace(lo, hi, int(samples))
    P = np.tile(check_vector3(origin, "origin"), (len(s), 1))
    P[:, _AXIS[axis]] = s
    B = field_at(P, geometry)
    G = np.zeros_like(P)
    null = np.linalg.norm(B, axis=1) <= FIELD_NULL_TOL
    for k, p in enumerate(P):
        if null[k]:
            if on_null == "raise":
                raise DomainError(f"gradient of magnitude undefined at field null ({axis}={s[k]:.6g} m)")
            continue
        G[k] = gradient_of_magnitude(p, geometry)
    return GradientProfile(axis, s, P, B, G, null)


# -- chip layouts ----------------------------------------------------------------------

def loop_chip_geometry(i_w1=4.0, i_w2=-10.0, filaments=16, half_length=5e-3):
    """Centre-wire chip with the winding inner electrode W1 and the wire W2.

    Both wires are 100 um wide and run along z either side of a 3 um gap
    under the trap axis (W1 at negative x). Around z = 0, W1 detours into a
    rectangular loop toward -x, 50 um wide, with inner length 150 um and
    outer length 250 um along z. Straight runs are truncated at
    ``+-half_length``. Corner routing and the W1/W2 spacing are not fully
    known, so this layout is an assumption.
    """
    c1, c2, w = -51.5e-6, 51.5e-6, 100e-6
    L = half_length
    zl, depth, wl = 100e-6, 100e-6, 50e-6
    sheets = (
        Sheet([(c2, 0, -L), (c2, 0, L)], w, i_w2, filaments, "W2"),
        Sheet([(c1, 0, -L), (c1, 0, -zl)], w, i_w1, filaments, "W1"),
        Sheet([(c1, 0, -zl), (c1 - depth, 0, -zl), (c1 - depth, 0, zl), (c1, 0, zl)], wl, i_w1, filaments, "W1"),
        Sheet([(c1, 0, zl), (c1, 0, L)], w, i_w1, filaments, "W1"),
    )
    return CircuitGeometry((), sheets, "centre-wire chip: W1 with rectangular loop, W2 straight")


def u_chip_geometry(current_density=1e5, leg_width=300e-6, gap=20e-6, filaments=32, half_length=5e-3):
    """U-shaped chip: two broad counter-propagating legs joined far away.

    Each leg carries ``current_density * leg_width``. The legs run along z
    either side of a gap centred at x = 0 and meet in a bend at
    ``z = +half_length``.
    """
    # round away binary noise so the saved geometry file reads cleanly
    xc = float(f"{0.5 * (gap + leg_width):.12g}")
    I = float(f"{current_density * leg_width:.12g}")
    L = half_length
    path = [(-xc, 0, -L), (-xc, 0, L), (xc, 0, L), (xc, 0, -L)]
    sheet = Sheet(path, leg_width, I, filaments, "U")
    return CircuitGeometry((), (sheet,), "U chip: two counter-propagating legs")


# -- secular frequencies ---------------------------------------------------------------


@dataclass(frozen=True)
class MathieuMatrices:
    """Stability matrices of ``x'' + (A + 2 Q cos 2 tau) x = 0``, ``tau = Omega t / 2``.

    ``A = 4 q / (m Omega**2) * Hess(phi_dc)`` and
    ``Q = 2 q / (m Omega**2) * Hess(phi_rf)``. Both are traceless when the
    potentials satisfy the Laplace equation.
    """

    A: np.ndarray
    Q: np.ndarray
    Omega: float
    check_laplace: bool = True

    def __post_init__(self):
        for name in ("A", "Q"):
            M = np.array(getattr(self, name), dtype=float)
            if M.shape != (3, 3) or not np.all(np.isfinite(M)):
                raise ValueError(f"{name} must be a finite 3x3 matrix")
            scale = max(np.abs(M).max(), np.finfo(float).tiny)
            if np.abs(M - M.T).max() > 1e-12 * scale:
                raise ValueError(f"{name} must be symmetric")
            if self.check_laplace and abs(np.trace(M)) > 1e-9 * scale:
                raise DomainError(f"trace({name}) = {np.trace(M):.3g} violates the Laplace constraint")
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        check_positive(self.Omega, "Omega")

    @classmethod
    def from_curvatures(cls, hess_dc, hess_rf, species, Omega, **kwargs):
        """Build from potential curvatures (V/m^2) of the dc and rf-amplitude fields."""
        c = species.charge / (species.mass * Omega**2)
        return cls(4 * c * np.asarray(hess_dc, float), 2 * c * np.asarray(hess_rf, float), Omega, **kwargs)


@dataclass(frozen=True)
class SecularFrequencies:
    """Lowest-order secular frequencies per axis.

    ``frequencies`` are in Hz; a negative value means ``kappa**2 < 0`` along
    that axis (no confinement) and carries the magnitude of the imaginary
    rate. ``lowest_order_valid`` is False when the stability parameters are
    not small enough for the approximation.
    """

    frequencies: np.ndarray
    kappa: np.ndarray
    unstable: np.ndarray
    lowest_order_valid: bool


# Beyond these the expansion kappa^2 = A + Q^2/2 is no longer reliable.
MAX_ABS_A = 0.1
MAX_ABS_Q = 0.4


def secular_frequencies(mm, diag_rtol=1e-9):
    """Secular frequencies ``kappa_i Omega / (2 * 2 pi)``, ``kappa_i**2 = A_ii + Q_ii**2 / 2``.

    Raises
    ------
    DomainError
        If A or Q has off-diagonal entries; rotate to principal axes first.
    """
    for name, M in (("A", mm.A), ("Q", mm.Q)):
        scale = max(np.abs(M).max(), np.finfo(float).tiny)
        if np.abs(M - np.diag(np.diag(M))).max() > diag_rtol * scale:
            raise DomainError(f"{name} is not diagonal; diagonalize the stability matrices first")
    a, q = np.diag(mm.A), np.diag(mm.Q)
    k2 = a + 0.5 * q**2
    kappa = np.sign(k2) * np.sqrt(np.abs(k2))
    valid = bool(np.all(np.abs(a) <= MAX_ABS_A) and np.all(np.abs(q) <= MAX_ABS_Q))
    if not valid:
        warnings.warn("stability parameters outside the lowest-order regime (|A_ii|, Q_ii^2 not << 1)", RuntimeWarning, stacklevel=2)
    freqs = kappa * mm.Omega / (2 * TWO_PI)
    return SecularFrequencies(freqs, kappa, k2 < 0, valid)
