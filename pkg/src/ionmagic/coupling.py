"""Spin-spin couplings induced by magnetic field gradients.

A gradient ``b`` of ``|B|`` shifts the qubit frequency of ion ``n`` by
``d omega_n / dx = g mu_B b / hbar``. The resulting Stern-Gerlach forces
displace the crystal in a spin-dependent way, which after eliminating the
phonons leaves the Ising interaction

    H/hbar = -1/2 * sum_{n<m} J_nm sigma_z^n sigma_z^m,

    J_nm = (g mu_B)^2 / (2 hbar m omega_z^2) * b_n^T (M^-1)_nm b_m,

with ``M`` the dimensionless Hessian. Positive ``J`` favours parallel spins
(ferromagnetic). Couplings are stored in rad/s.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from ._validation import check_spins, check_vector3
from .constants import HBAR, MU_B, TWO_PI
from .crystal import (
    IonCrystal,
    TrapSpec,
    axial_matrix,
    build_crystal,
    linear_chain_positions,
    transverse_matrix,
)
from .exceptions import SoftModeError

# Largest accepted condition number of the Hessian before inversion.
DEFAULT_COND_MAX = 1e12

SIGN_CONVENTION = "H/hbar = -1/2 sum_{n<m} J_nm s_n s_m; J > 0 is ferromagnetic; J in rad/s"


@dataclass(frozen=True)
class GradientSpec:
    """Gradient of ``|B|`` at the crystal.

    Parameters
    ----------
    b_vector : 3-vector
        Uniform gradient in T/m.
    b0 : float
        Static offset field in T that sets the quantization axis. Only
        recorded; the couplings do not depend on it.
    per_ion_override : array-like, shape (n_ions, 3), optional
        Gradient at every ion, replacing ``b_vector``.
    """

    b_vector: tuple = (0.0, 0.0, 1.0)
    b0: float = 0.0
    per_ion_override: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "b_vector", tuple(check_vector3(self.b_vector, "b_vector").tolist()))
        if not (np.isfinite(self.b0) and self.b0 >= 0):
            raise ValueError(f"b0 must be a non-negative field, got {self.b0!r}")
        if self.per_ion_override is not None:
            G = np.asarray(self.per_ion_override, dtype=float)
            if G.ndim != 2 or G.shape[1] != 3 or not np.all(np.isfinite(G)):
                raise ValueError("per_ion_override must be a finite (n_ions, 3) array")
            object.__setattr__(self, "per_ion_override", tuple(map(tuple, G.tolist())))

    @classmethod
    def along(cls, axis, b, **kwargs):
        """Uniform gradient of size ``b`` (T/m) along ``"x"``, ``"y"`` or ``"z"``."""
        v = np.zeros(3)
        v["xyz".index(axis)] = b
        return cls(tuple(v), **kwargs)

    def per_ion(self, n_ions):
        """Gradient at every ion, shape (n_ions, 3)."""
        if self.per_ion_override is None:
            return np.tile(self.b_vector, (n_ions, 1))
        G = np.asarray(self.per_ion_override)
        if len(G) != n_ions:
            raise ValueError(f"per_ion_override has {len(G)} rows for {n_ions} ions")
        return G

    def scaled(self, factor):
        over = None if self.per_ion_override is None else np.asarray(self.per_ion_override) * factor
        return GradientSpec(tuple(np.asarray(self.b_vector) * factor), self.b0, over)


@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric Ising coupling matrix with zero diagonal, in rad/s."""

    J: np.ndarray
    gradient: GradientSpec | None
    trap: TrapSpec
    sign_convention: str = SIGN_CONVENTION
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ValueError("J must be square")
        J = 0.5 * (J + J.T)
        np.fill_diagonal(J, 0.0)
        J.setflags(write=False)
        object.__setattr__(self, "J", J)

    @property
    def J_hz(self):
        """Couplings divided by 2 pi."""
        return self.J / TWO_PI

    @property
    def n_spins(self):
        return len(self.J)

    def max_abs(self):
        return float(np.abs(self.J).max()) if self.n_spins > 1 else 0.0

    def nearest_neighbour(self):
        """Couplings ``J[n, n+1]`` inside each chain."""
        N, C = self.trap.ions_per_chain, self.trap.chains
        return np.concatenate([np.diag(self.J[c * N:(c + 1) * N, c * N:(c + 1) * N], 1) for c in range(C)])

    def sign_pattern(self):
        """Classify off-diagonal signs of a single chain.

        Returns one of ``"ferromagnetic"`` (all J >= 0), ``"antiferromagnetic"``
        (all J <= 0), ``"alternating"`` (sign of J_nm is (-1)**(n-m), the
        couplings of a Neel-ordered chain) or ``"mixed"``.
        """
        n = self.n_spins
        iu = np.triu_indices(n, 1)
        v = self.J[iu]
        if np.all(v >= 0):
            return "ferromagnetic"
        if np.all(v <= 0):
            return "antiferromagnetic"
        parity = (-1.0) ** (iu[1] - iu[0])
        if np.all(v * parity >= 0):
            return "alternating"
        return "mixed"

    def blocks(self):
        """``(intra, inter)`` off-diagonal entries of a two-chain matrix."""
        if self.trap.chains != 2:
            raise ValueError("block summary needs two chains")
        N = self.trap.ions_per_chain
        intra = np.concatenate([self.J[:N, :N][np.triu_indices(N, 1)], self.J[N:, N:][np.triu_indices(N, 1)]])
        inter = self.J[:N, N:].ravel()
        return intra, inter

    def block_summary(self):
        """Largest magnitude (rad/s) and sign of that entry per block."""
        out = {}
        for name, v in zip(("intra", "inter"), self.blocks()):
            if v.size == 0:
                out[name] = {"max_abs": 0.0, "sign": 0}
                continue
            k = int(np.argmax(np.abs(v)))
            out[name] = {"max_abs": float(abs(v[k])), "sign": int(np.sign(v[k]))}
        return out


def zeeman_gradient(spec, species):
    """Gradient of the qubit angular frequency, ``g mu_B b / hbar``.

    Parameters
    ----------
    spec : GradientSpec
    species : IonSpecies

    Returns
    -------
    ndarray
        rad/(s m); shape (3,) for a uniform gradient, (n_ions, 3) with a
        per-ion override.
    """
    b = np.asarray(spec.b_vector if spec.per_ion_override is None else spec.per_ion_override, dtype=float)
    return species.lande_g * MU_B * b / HBAR


def _prefactor(trap):
    """``(g mu_B)^2 / (2 hbar m omega_z^2)`` in rad/s per (T/m)^2."""
    sp = trap.species
    return (sp.lande_g * MU_B) ** 2 / (2 * HBAR * sp.mass * trap.omega_z**2)


def _force_pattern(grad, n_ions):
    """Direction-major (3n, n) matrix whose column k is ion k's gradient."""
    G = grad.per_ion(n_ions)
    Bm = np.zeros((3 * n_ions, n_ions))
    k = np.arange(n_ions)
    for i in range(3):
        Bm[i * n_ions + k, k] = G[:, i]
    return Bm


def _safe_inverse(lam, vec, cond_max, label=""):
    """Inverse from an eigen-decomposition, refusing soft or unstable modes."""
    lam = np.asarray(lam)
    k_min = int(np.argmin(lam))
    if lam[k_min] <= 0:
        raise SoftModeError(
            f"{label}mode {k_min} has non-positive eigenvalue {lam[k_min]:.6g}; crystal is unstable",
            mode_index=k_min,
            eigenvalue=float(lam[k_min]),
        )
    cond = lam.max() / lam[k_min]
    if cond > cond_max:
        raise SoftModeError(
            f"{label}mode {k_min} is soft (eigenvalue {lam[k_min]:.3g}, condition number {cond:.3g} > {cond_max:.3g})",
            mode_index=k_min,
            eigenvalue=float(lam[k_min]),
        )
    return (vec / lam) @ vec.T


def coupling_matrix_general(state, grad, cond_max=DEFAULT_COND_MAX):
    """Couplings for any gradient direction, from the full Hessian.

    Parameters
    ----------
    state : CrystalState
        A stable equilibrium. Modes are computed if missing.
    grad : GradientSpec
    cond_max : float
        Condition-number guard on the Hessian.

    Returns
    -------
    CouplingMatrix

    Raises
    ------
    SoftModeError
        If the Hessian has a non-positive eigenvalue or its condition number
        exceeds ``cond_max``. The message names the offending mode.
    """
    state = state.with_modes()
    trap = state.spec
    n = trap.n_ions
    Minv = _safe_inverse(state.eigenvalues, state.mode_vectors, cond_max)
    Bm = _force_pattern(grad, n)
    J = _prefactor(trap) * Bm.T @ Minv @ Bm
    return CouplingMatrix(J, grad, trap, metadata={"method": "general"})


def _single_chain_z(spec):
    if spec.chains != 1:
        raise ValueError("operation defined for a single linear chain only")
    return linear_chain_positions(spec.ions_per_chain)


def coupling_axial(spec, b, cond_max=DEFAULT_COND_MAX):
    """Couplings of a single chain in an axial gradient ``b`` (T/m).

    ``J = (g mu_B b)^2 / (2 hbar m omega_z^2) * A^-1``; all entries are
    positive.
    """
    A = axial_matrix(_single_chain_z(spec))
    lam, vec = np.linalg.eigh(A)
    J = _prefactor(spec) * b**2 * _safe_inverse(lam, vec, cond_max, "axial ")
    return CouplingMatrix(J, GradientSpec.along("z", b), spec, metadata={"method": "axial"})


def coupling_transverse(spec, b, cond_max=DEFAULT_COND_MAX):
    """Couplings of a single chain in a transverse (x) gradient ``b`` (T/m).

    Uses ``(B^x)^-1``. Close to the zig-zag instability the couplings grow
    without bound and alternate in sign.

    Raises
    ------
    SoftModeError
        At or beyond the critical anisotropy.
    """
    B = transverse_matrix(axial_matrix(_single_chain_z(spec)), spec.alpha_x)
    lam, vec = np.linalg.eigh(B)
    J = _prefactor(spec) * b**2 * _safe_inverse(lam, vec, cond_max, "transverse ")
    return CouplingMatrix(J, GradientSpec.along("x", b), spec, metadata={"method": "transverse", "alpha_x": spec.alpha_x})


def coupling_two_chain(spec, grad, cond_max=DEFAULT_COND_MAX, state=None):
    """Couplings of two parallel chains; see :meth:`CouplingMatrix.block_summary`."""
    if spec.chains != 2:
        raise ValueError("coupling_two_chain needs a two-chain TrapSpec")
    state = build_crystal(spec) if state is None else state.with_modes()
    if state.is_saddle:
        raise SoftModeError("two-chain equilibrium is a saddle (beyond the structural transition)")
    cm = coupling_matrix_general(state, grad, cond_max)
    return CouplingMatrix(cm.J, grad, spec, metadata={"method": "two_chain"})


# -- driven response -------------------------------------------------------------------


@dataclass(frozen=True)
class DrivenResponse:
    """Classical response of every normal mode to oscillating gradients.

    ``amplitudes[t, k]`` is the rotating-frame complex amplitude (m) of mode
    ``k``: the mode coordinate is ``Re(amplitude * exp(-i omega_k t))`` and
    ``|amplitude|`` the phase-space radius. ``resonant[d, k]`` flags drives
    exactly on resonance, where the amplitude grows linearly.
    """

    times: np.ndarray
    amplitudes: np.ndarray
    mode_frequencies: np.ndarray
    mode_vectors: np.ndarray
    modal_forces: np.ndarray
    detunings: np.ndarray
    resonant: np.ndarray

    def mode_coordinates(self):
        """Real mode displacements (m), shape (n_times, n_modes)."""
        w = TWO_PI * self.mode_frequencies
        return np.real(self.amplitudes * np.exp(-1j * np.outer(self.times, w)))

    def displacements(self):
        """Ion displacements (m), direction-major rows, shape (n_times, 3 n_ions)."""
        return self.mode_coordinates() @ self.mode_vectors.T

    def ion_amplitudes(self):
        """Rotating-frame amplitude envelope mapped to ion coordinates."""
        return self.amplitudes @ self.mode_vectors.T


def _integral_exp(nu, t):
    """``int_0^t exp(i nu t') dt'`` for an array of ``t``; ``nu = 0`` handled."""
    if nu == 0:
        return t.astype(complex)
    return (np.exp(1j * nu * t) - 1.0) / (1j * nu)


def stern_gerlach_forces(state, grad, spin_pattern):
    """Spin-dependent force ``s_n g mu_B b_n / 2`` on every ion, direction-major (N)."""
    n = state.n_ions
    s = check_spins(spin_pattern, n)
    if s.ndim != 1:
        raise ValueError("spin_pattern must be a single configuration")
    G = grad.per_ion(n)
    F = 0.5 * state.spec.species.lande_g * MU_B * G * s[:, None]
    return F.T.reshape(-1)


def driven_mode_response(state, grad, spin_pattern, drives, duration, n_times=201, times=None, resonance_rtol=1e-12):
    """Classical mode amplitudes under sinusoidal gradient drives.

    The gradient ``grad`` (at unit drive scale) is modulated as
    ``sum_d scale_d * sin(omega_d t)``, starting with the crystal at rest.
    Each mode ``k`` obeys ``q'' + omega_k^2 q = F_k(t) / m`` with modal force
    ``F_k = v_k . f`` and ``f`` the Stern-Gerlach force pattern, which gives
    the closed form

        alpha_k(t) = i / (m omega_k) * int_0^t F_k(t') exp(i omega_k t') dt'.

    The resonant part scales like ``(1 - exp(-i delta t)) / delta`` with
    ``delta = omega_d - omega_k``, so it returns to zero at ``t = 2 pi / delta``.

    Parameters
    ----------
    state : CrystalState
    grad : GradientSpec
    spin_pattern : sequence of +-1
    drives : sequence of (scale, omega)
        Dimensionless amplitude scale and angular frequency (rad/s).
    duration : float
        Final time in s.
    n_times : int
    times : array-like, optional
        Explicit evaluation times; overrides ``duration``/``n_times``.

    Returns
    -------
    DrivenResponse
    """
    state = state.with_modes()
    if not np.all(state.mode_frequencies > 0):
        k = int(np.argmin(state.mode_frequencies))
        raise SoftModeError("driven response needs a stable crystal", mode_index=k, eigenvalue=float(state.eigenvalues[k]))
    drives = [(float(a), float(w)) for a, w in drives]
    if not drives:
        raise ValueError("at least one drive is required")
    if times is None:
        if not duration > 0:
            raise ValueError("duration must be positive")
        t = np.linspace(0.0, duration, int(n_times))
    else:
        t = np.asarray(times, dtype=float)
    f = stern_gerlach_forces(state, grad, spin_pattern)
    V = state.mode_vectors
    Fk = V.T @ f
    wk = TWO_PI * state.mode_frequencies
    m = state.spec.species.mass
    alpha = np.zeros((len(t), len(wk)), dtype=complex)
    det = np.zeros((len(drives), len(wk)))
    res = np.zeros((len(drives), len(wk)), dtype=bool)
    for d, (scale, wd) in enumerate(drives):
        for k, w in enumerate(wk):
            delta = wd - w
            det[d, k] = delta
            if abs(delta) <= resonance_rtol * w:
                res[d, k] = True
                delta = 0.0
            # sin(wd t) = (e^{i wd t} - e^{-i wd t}) / 2i
            integral = (_integral_exp(w + wd, t) - _integral_exp(-delta, t)) / 2j
            alpha[:, k] += 1j / (m * w) * scale * Fk[k] * integral
    return DrivenResponse(t, alpha, state.mode_frequencies, V, Fk, det, res)


# -- estimator -------------------------------------------------------------------------


class MagicCoupling(BaseEstimator):
    """Estimator computing the coupling matrix of a crystal.

    Parameters
    ----------
    crystal : IonCrystal
        Unfitted crystal description; cloned on ``fit``.
    b_vector : 3-vector
        Uniform gradient in T/m.
    b0 : float
    per_ion_override : array-like, optional
    cond_max : float

    Attributes
    ----------
    crystal_ : IonCrystal
        Fitted clone.
    coupling_ : CouplingMatrix
    J_ : ndarray
        Couplings in rad/s.
    """

    def __init__(self, crystal=None, b_vector=(0.0, 0.0, 1.0), b0=0.0, per_ion_override=None, cond_max=DEFAULT_COND_MAX):
        self.crystal = crystal
        self.b_vector = b_vector
        self.b0 = b0
        self.per_ion_override = per_ion_override
        self.cond_max = cond_max

    def fit(self, X=None, y=None):
        crystal = IonCrystal() if self.crystal is None else clone(self.crystal)
        self.crystal_ = crystal.fit()
        grad = GradientSpec(self.b_vector, self.b0, self.per_ion_override)
        self.coupling_ = coupling_matrix_general(self.crystal_.state_, grad, self.cond_max)
        self.J_ = self.coupling_.J
        self.n_features_in_ = self.coupling_.n_spins
        return self

    def predict(self, X):
        """Ising energies E/hbar (rad/s) of spin configurations (rows of +-1)."""
        check_is_fitted(self, "J_")
        S = np.atleast_2d(check_spins(X, self.n_features_in_))
        return -0.25 * np.einsum("si,ij,sj->s", S, self.J_, S)

