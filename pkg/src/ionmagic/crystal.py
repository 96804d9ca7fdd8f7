"""Equilibrium structure and normal modes of one or two parallel ion chains.

All internal work is dimensionless: lengths in units of the scale length
``l`` with ``l**3 = q**2 / (4 pi eps0 m omega_z**2)``, energies in
``m omega_z**2 l**2``, Hessian entries in ``m omega_z**2`` and angular mode
frequencies in ``omega_z``. SI units appear only on the public attributes
that say so.

Hessians are laid out direction-major: row ``i * n_ions + n`` is the
``i``-th Cartesian component (x, y, z) of ion ``n``. For a single linear
chain this makes the matrix literally block-diagonal, ``diag(B^x, B^y, A)``.
Ions are ordered chain-major, and along ``z`` inside each chain.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import pdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_positions, check_positive, check_positive_int, check_square_symmetric
from .constants import CA40, EPS_0, TWO_PI, IonSpecies, get_species
from .exceptions import ConvergenceError, DomainError

AXES = "xyz"

# Relative size of a negative Hessian eigenvalue that counts as an instability.
SADDLE_RTOL = 1e-9


def anisotropy_from_frequencies(omega_z, omega_i):
    """Return ``alpha_i = omega_z**2 / omega_i**2``."""
    return (omega_z / omega_i) ** 2


@dataclass(frozen=True)
class TrapSpec:
    """Harmonic trap holding one chain or two parallel chains.

    Parameters
    ----------
    species : IonSpecies
    omega_z : float
        Axial angular frequency in rad/s.
    alpha_x, alpha_y : float
        Anisotropies ``omega_z**2 / omega_i**2``. ``alpha_y`` defaults to
        ``alpha_x``.
    chains : {1, 2}
    ions_per_chain : int
    chain_separation : float
        Distance ``d`` in m between the two trap axes along x. Only used when
        ``chains == 2``.
    axial_shift : float
        Axial offset in m of the second chain's trap centre.
    """

    species: IonSpecies = CA40
    omega_z: float = TWO_PI * 1e6
    alpha_x: float = 0.1
    alpha_y: float | None = None
    chains: int = 1
    ions_per_chain: int = 1
    chain_separation: float = 0.0
    axial_shift: float = 0.0

    def __post_init__(self):
        if not isinstance(self.species, IonSpecies):
            raise TypeError("species must be an IonSpecies")
        check_positive(self.omega_z, "omega_z")
        check_positive(self.alpha_x, "alpha_x")
        if self.alpha_y is None:
            object.__setattr__(self, "alpha_y", self.alpha_x)
        check_positive(self.alpha_y, "alpha_y")
        if self.chains not in (1, 2):
            raise ValueError(f"chains must be 1 or 2, got {self.chains!r}")
        check_positive_int(self.ions_per_chain, "ions_per_chain")
        if self.chains == 2:
            check_positive(self.chain_separation, "chain_separation")
        if not np.isfinite(self.axial_shift):
            raise ValueError("axial_shift must be finite")

    @classmethod
    def from_frequencies(cls, omega_x, omega_y, omega_z, **kwargs):
        """Build a spec from radial and axial angular frequencies (rad/s)."""
        return cls(
            omega_z=omega_z,
            alpha_x=anisotropy_from_frequencies(omega_z, omega_x),
            alpha_y=anisotropy_from_frequencies(omega_z, omega_y),
            **kwargs,
        )

    @property
    def n_ions(self):
        return self.chains * self.ions_per_chain

    @property
    def scale_length(self):
        q, m = self.species.charge, self.species.mass
        return (q**2 / (4 * np.pi * EPS_0 * m * self.omega_z**2)) ** (1 / 3)

    @property
    def anisotropies(self):
        return np.array([self.alpha_x, self.alpha_y, 1.0])

    @property
    def radial_frequencies(self):
        """(omega_x, omega_y) in rad/s."""
        return self.omega_z / np.sqrt(self.alpha_x), self.omega_z / np.sqrt(self.alpha_y)

    def chain_index(self):
        return np.repeat(np.arange(self.chains), self.ions_per_chain)

    def trap_centers(self):
        """Dimensionless trap centre of every ion, shape (n_ions, 3)."""
        c = np.zeros((self.n_ions, 3))
        if self.chains == 2:
            l = self.scale_length
            c[self.ions_per_chain:, 0] = self.chain_separation / l
            c[self.ions_per_chain:, 2] = self.axial_shift / l
        return c

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class CrystalState:
    """Equilibrium of a :class:`TrapSpec`, optionally with its normal modes.

    ``mode_frequencies`` are in Hz, sorted in descending order. An unstable
    direction (negative Hessian eigenvalue) is reported as a negative
    frequency whose magnitude is the imaginary part.
    """

    spec: TrapSpec
    positions_dimensionless: np.ndarray
    residual: float
    iterations: int
    is_saddle: bool = False
    hessian: np.ndarray | None = None
    mode_frequencies: np.ndarray | None = None
    mode_vectors: np.ndarray | None = None
    _eigenvalues: np.ndarray | None = field(default=None, repr=False)

    @property
    def scale_length(self):
        return self.spec.scale_length

    @property
    def positions(self):
        """Ion positions in m, shape (n_ions, 3)."""
        return self.positions_dimensionless * self.scale_length

    @property
    def n_ions(self):
        return self.spec.n_ions

    @property
    def eigenvalues(self):
        """Hessian eigenvalues in units of ``m omega_z**2``, descending."""
        return self._eigenvalues

    @property
    def is_stable(self):
        if self._eigenvalues is None:
            return not self.is_saddle
        return bool(np.all(self._eigenvalues > 0))

    def with_modes(self):
        """Return a copy with Hessian and normal modes filled in."""
        if self.hessian is not None:
            return self
        H = hessian(self)
        lam, vec = _eigh_descending(H)
        freqs = _signed_sqrt(lam) * self.spec.omega_z / TWO_PI
        for a in (H, lam, vec, freqs):
            a.setflags(write=False)
        return replace(self, hessian=H, mode_frequencies=freqs, mode_vectors=vec, _eigenvalues=lam)


@dataclass(frozen=True)
class StabilityReport:
    alpha_crit_exact: float
    alpha_crit_approx: float
    zigzag_frequency: float
    is_linear_stable: bool


# -- potential, gradient and Hessian ---------------------------------------------------


def _pair_vectors(X):
    R = X[:, None, :] - X[None, :, :]
    r = np.sqrt(np.einsum("abk,abk->ab", R, R))
    np.fill_diagonal(r, np.inf)
    return R, r


def potential_energy(positions, spec):
    """Total dimensionless potential energy of a configuration.

    Parameters
    ----------
    positions : array-like, shape (n_ions, 3)
        Positions in units of the scale length.
    spec : TrapSpec

    Returns
    -------
    float
        Energy in units of ``m omega_z**2 l**2``.
    """
    X = check_positions(positions, spec.n_ions)
    D = X - spec.trap_centers()
    harmonic = 0.5 * np.sum(D**2 / spec.anisotropies)
    if len(X) < 2:
        return float(harmonic)
    r = pdist(X)
    if np.any(r == 0):
        raise DomainError("coincident ions: Coulomb energy is singular")
    return float(harmonic + np.sum(1.0 / r))


def potential_gradient(positions, spec):
    """Dimensionless gradient of :func:`potential_energy`, shape (n_ions, 3)."""
    X = check_positions(positions, spec.n_ions)
    R, r = _pair_vectors(X)
    if np.any(r == 0):
        raise DomainError("coincident ions: Coulomb force is singular")
    g = (X - spec.trap_centers()) / spec.anisotropies
    return g - np.einsum("abk,ab->ak", R, r**-3)


def _hessian_blocks(X, alpha):
    """Ion-major Hessian as an array of 3x3 blocks, shape (n, 3, n, 3)."""
    n = len(X)
    R, r = _pair_vectors(X)
    K = 3 * np.einsum("abi,abj->abij", R, R) * (r**-5)[..., None, None]
    K -= np.eye(3) * (r**-3)[..., None, None]
    H = -K.transpose(0, 2, 1, 3).copy()
    diag = K.sum(axis=1) + np.diag(1.0 / alpha)
    idx = np.arange(n)
    H[idx, :, idx, :] = diag
    return H


def hessian_at(positions, spec):
    """Direction-major dimensionless Hessian at any configuration (no checks)."""
    X = check_positions(positions, spec.n_ions)
    n = len(X)
    H = _hessian_blocks(X, spec.anisotropies)
    return H.transpose(1, 0, 3, 2).reshape(3 * n, 3 * n)


def hessian(state, spec=None, check_equilibrium=True, atol=1e-6):
    """Hessian of the crystal potential at an equilibrium.

    Parameters
    ----------
    state : CrystalState
    spec : TrapSpec, optional
        Defaults to ``state.spec``.
    check_equilibrium : bool
        Refuse configurations whose force residual exceeds ``atol``; the
        first-order residual would otherwise leak into the mode spectrum.

    Returns
    -------
    ndarray, shape (3 n_ions, 3 n_ions)
        Direction-major, in units of ``m omega_z**2``.
    """
    spec = state.spec if spec is None else spec
    X = state.positions_dimensionless
    if check_equilibrium:
        res = np.abs(potential_gradient(X, spec)).max()
        if res > atol:
            raise DomainError(f"configuration is not an equilibrium (force residual {res:.3g})")
    return hessian_at(X, spec)


def _eigh_descending(H):
    lam, vec = np.linalg.eigh(H)
    order = np.argsort(lam)[::-1]
    return lam[order], vec[:, order]


def _signed_sqrt(lam):
    return np.sign(lam) * np.sqrt(np.abs(lam))


def normal_modes(H, omega_z=None):
    """Mode frequencies and eigenvectors of a dimensionless Hessian.

    Parameters
    ----------
    H : ndarray, shape (k, k)
        Symmetric matrix in units of ``m omega_z**2``.
    omega_z : float, optional
        Axial angular frequency in rad/s. When given the frequencies are in
        Hz, otherwise in units of ``omega_z``.

    Returns
    -------
    frequencies : ndarray
        Descending. Negative eigenvalues come out as negative frequencies
        (``-sqrt(|lambda|)``) and flag an imaginary, unstable mode.
    vectors : ndarray
        Orthonormal eigenvectors as columns.
    """
    H = check_square_symmetric(H, "Hessian", rtol=1e-10)
    lam, vec = _eigh_descending(0.5 * (H + H.T))
    nu = _signed_sqrt(lam)
    if omega_z is not None:
        nu = nu * omega_z / TWO_PI
    return nu, vec


# -- equilibrium ---------------------------------------------------------------------


def initial_positions(spec):
    """Uniformly spaced chains spanning ``2 N**0.56`` scale lengths."""
    N = spec.ions_per_chain
    z = np.linspace(-1.0, 1.0, N) * N**0.56 if N > 1 else np.zeros(1)
    X = spec.trap_centers()
    X[:, 2] += np.tile(z, spec.chains)
    return X


def _free_mask(spec):
    free = np.zeros((spec.n_ions, 3), dtype=bool)
    free[:, 2] = True
    if spec.chains == 2:
        free[:, 0] = True
    return free


def solve_equilibrium(spec, tol=1e-10, max_iter=200, initial=None):
    """Find the linear (one chain) or planar (two chains) equilibrium.

    Damped Newton iteration on the force residual with backtracking. A single
    chain is solved along z with x = y = 0; two chains are solved in the
    x-z plane with y = 0, which captures their mutual bending. Both are exact
    symmetry subspaces, so the result may be a saddle of the full potential
    beyond the zig-zag transition; that case is flagged via ``is_saddle``.

    Parameters
    ----------
    spec : TrapSpec
    tol : float
        Convergence threshold on the max-norm of the dimensionless force.
        It is raised to the rounding floor ``64 eps max|c|/alpha`` when the
        trap centres ``c`` are far from the origin (widely separated chains).
    max_iter : int
    initial : array-like, optional
        Dimensionless starting configuration.

    Returns
    -------
    CrystalState
        Positions only; call :meth:`CrystalState.with_modes` for the spectrum.

    Raises
    ------
    ConvergenceError
        If the residual is still above ``tol`` after ``max_iter`` steps.
    """
    X = initial_positions(spec) if initial is None else check_positions(initial, spec.n_ions).copy()
    free = _free_mask(spec).ravel()
    X.reshape(-1)[~free] = spec.trap_centers().reshape(-1)[~free]
    alpha = spec.anisotropies
    floor = 64 * np.finfo(float).eps * float((np.abs(spec.trap_centers()) / alpha).max())
    tol = max(tol, floor)

    def residual_vec(Y):
        try:
            return potential_gradient(Y, spec).reshape(-1)[free]
        except DomainError:
            return None

    g = residual_vec(X)
    if g is None:
        raise DomainError("initial configuration has coincident ions")
    it = 0
    while np.abs(g).max() >= tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"equilibrium not converged after {max_iter} iterations "
                f"(residual {np.abs(g).max():.3g})",
                residual=float(np.abs(g).max()),
                iterations=it,
            )
        it += 1
        Hf = _hessian_blocks(X, alpha).reshape(3 * spec.n_ions, -1)[np.ix_(free, free)]
        try:
            step = -np.linalg.solve(Hf, g)
        except np.linalg.LinAlgError:
            step = -g
        norm0 = np.linalg.norm(g)
        t = 1.0
        while True:
            Y = X.copy()
            Y.reshape(-1)[free] += t * step
            gy = residual_vec(Y)
            if gy is not None and np.linalg.norm(gy) <= (1 - 1e-4 * t) * norm0:
                break
            t *= 0.5
            if t < 1e-12:
                # Newton direction useless here; fall back to a small descent step.
                Y = X.copy()
                Y.reshape(-1)[free] -= 1e-3 * g / max(np.abs(g).max(), 1.0)
                gy = residual_vec(Y)
                if gy is None:
                    raise ConvergenceError("line search failed", residual=float(np.abs(g).max()), iterations=it)
                break
        X, g = Y, gy

    H = hessian_at(X, spec)
    lam = np.linalg.eigvalsh(H)
    is_saddle = bool(lam.min() < -SADDLE_RTOL * max(np.abs(lam).max(), 1.0))
    X.setflags(write=False)
    return CrystalState(
        spec=spec,
        positions_dimensionless=X,
        residual=float(np.abs(g).max()),
        iterations=it,
        is_saddle=is_saddle,
    )


def build_crystal(spec, tol=1e-10, max_iter=200):
    """Equilibrium plus Hessian and normal modes."""
    return solve_equilibrium(spec, tol=tol, max_iter=max_iter).with_modes()


# -- single-chain closed forms and stability -----------------------------------------


def axial_matrix(z):
    """The axial block ``A`` of a linear chain at dimensionless positions ``z``."""
    z = np.asarray(z, dtype=float)
    dz = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(dz, np.inf)
    A = -2.0 / dz**3
    np.fill_diagonal(A, 1.0 + 2.0 * np.sum(1.0 / dz**3, axis=1))
    return A


def transverse_matrix(A, alpha):
    """``B^i = (1/alpha_i + 1/2) I - A/2``."""
    return (1.0 / alpha + 0.5) * np.eye(len(A)) - 0.5 * A


def linear_chain_positions(n_ions, tol=1e-12):
    """Dimensionless equilibrium z-positions of a single linear chain."""
    spec = TrapSpec(ions_per_chain=check_positive_int(n_ions, "n_ions"))
    return np.array(solve_equilibrium(spec, tol=tol).positions_dimensionless[:, 2])


def critical_anisotropy(n_ions):
    """Critical anisotropy of the linear-to-zig-zag transition.

    Returns
    -------
    exact : float
        ``2 / (nu_max**2 - 1)`` with ``nu_max`` the largest eigenfrequency of
        the axial matrix ``A``. Infinite for a single ion.
    approx : float
        Power law ``2.53 N**-1.73``.
    """
    if isinstance(n_ions, bool) or int(n_ions) != n_ions or n_ions < 1:
        raise DomainError(f"number of ions must be a positive integer, got {n_ions!r}")
    n_ions = int(n_ions)
    approx = 2.53 * n_ions**-1.73
    if n_ions == 1:
        return np.inf, approx
    nu2 = np.linalg.eigvalsh(axial_matrix(linear_chain_positions(n_ions))).max()
    return 2.0 / (nu2 - 1.0), approx


def _require_single_chain(spec):
    if spec.chains != 1:
        raise ValueError("operation defined for a single linear chain only")


def zigzag_frequency(spec):
    """Lowest transverse (x) mode of a single linear chain, in Hz.

    A negative value flags an imaginary frequency: the chain is beyond the
    zig-zag transition and the magnitude is the instability rate / 2 pi.
    """
    _require_single_chain(spec)
    z = linear_chain_positions(spec.ions_per_chain)
    lam = np.linalg.eigvalsh(transverse_matrix(axial_matrix(z), spec.alpha_x)).min()
    return float(_signed_sqrt(lam) * spec.omega_z / TWO_PI)


def _x_dominated(vectors, n_ions):
    weight = np.sum(vectors[:n_ions] ** 2, axis=0)
    return weight > 0.5


def stability_report(spec, state=None):
    """Zig-zag diagnostics for one chain or for the linear-linear pair.

    For two chains the zig-zag frequency is the lowest x-dominated mode of
    the planar equilibrium, and stability covers all modes.
    """
    exact, approx = critical_anisotropy(spec.ions_per_chain)
    if spec.chains == 1:
        nu_zz = zigzag_frequency(spec)
        z = linear_chain_positions(spec.ions_per_chain)
        A = axial_matrix(z)
        stable = all(np.linalg.eigvalsh(transverse_matrix(A, a)).min() > 0 for a in (spec.alpha_x, spec.alpha_y))
        return StabilityReport(exact, approx, nu_zz, bool(stable))
    state = (state or solve_equilibrium(spec)).with_modes()
    mask = _x_dominated(state.mode_vectors, spec.n_ions)
    nu_zz = float(state.mode_frequencies[mask].min())
    return StabilityReport(exact, approx, nu_zz, state.is_stable)


# -- two-chain structure ---------------------------------------------------------------


@dataclass(frozen=True)
class ChainDeformation:
    """Bending of two chains relative to isolated chains.

    ``interchain_increase`` holds ``(x2 - x1)/d - 1`` for every ion pair and
    ``spacing_increase`` the relative growth of each nearest-neighbour
    spacing (both chains) against a lone chain in the same trap.
    """

    interchain_increase: np.ndarray
    spacing_increase: np.ndarray
    x_displacement: np.ndarray

    @property
    def interchain_max(self):
        return float(self.interchain_increase.max())

    @property
    def interchain_mean(self):
        return float(self.interchain_increase.mean())

    @property
    def spacing_max(self):
        return float(self.spacing_increase.max())

    @property
    def spacing_mean(self):
        return float(self.spacing_increase.mean())


def chain_deformation(state):
    """Compare a two-chain equilibrium with two decoupled chains."""
    spec = state.spec
    if spec.chains != 2:
        raise ValueError("chain deformation needs two chains")
    N = spec.ions_per_chain
    X = state.positions_dimensionless
    d = spec.chain_separation / spec.scale_length
    inter = (X[N:, 0] - X[:N, 0]) / d - 1.0
    single = linear_chain_positions(N)
    ref = np.diff(single)
    spacing = np.concatenate([np.diff(X[:N, 2]) / ref - 1.0, np.diff(X[N:, 2]) / ref - 1.0]) if N > 1 else np.zeros(0)
    xdisp = (X[:, 0] - spec.trap_centers()[:, 0]) * spec.scale_length
    return ChainDeformation(inter, spacing, xdisp)


# -- estimator -------------------------------------------------------------------------


class IonCrystal(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` solves the crystal, ``transform`` projects
    displacements onto its normal modes.

    Parameters
    ----------
    ions_per_chain : int
    chains : {1, 2}
    omega_z : float
        Axial angular frequency in rad/s.
    alpha_x, alpha_y : float
        Radial anisotropies; ``alpha_y=None`` copies ``alpha_x``.
    chain_separation, axial_shift : float
        Two-chain geometry in m.
    species : str, dict or IonSpecies
    tol, max_iter
        Equilibrium solver settings.

    Attributes
    ----------
    spec_ : TrapSpec
    state_ : CrystalState
    positions_ : ndarray, shape (n_ions, 3)
        Equilibrium positions in m.
    hessian_ : ndarray
        Dimensionless, direction-major.
    mode_frequencies_ : ndarray
        Hz, descending; negative values are imaginary frequencies.
    mode_vectors_ : ndarray
    is_stable_ : bool
    """

    def __init__(
        self,
        ions_per_chain=2,
        chains=1,
        omega_z=TWO_PI * 1e6,
        alpha_x=0.1,
        alpha_y=None,
        chain_separation=0.0,
        axial_shift=0.0,
        species="Ca40",
        tol=1e-10,
        max_iter=200,
    ):
        self.ions_per_chain = ions_per_chain
        self.chains = chains
        self.omega_z = omega_z
        self.alpha_x = alpha_x
        self.alpha_y = alpha_y
        self.chain_separation = chain_separation
        self.axial_shift = axial_shift
        self.species = species
        self.tol = tol
        self.max_iter = max_iter

    @classmethod
    def from_spec(cls, spec, **kwargs):
        return cls(
            ions_per_chain=spec.ions_per_chain,
            chains=spec.chains,
            omega_z=spec.omega_z,
            alpha_x=spec.alpha_x,
            alpha_y=spec.alpha_y,
            chain_separation=spec.chain_separation,
            axial_shift=spec.axial_shift,
            species=spec.species,
            **kwargs,
        )

    def to_spec(self):
        return TrapSpec(
            species=get_species(self.species),
            omega_z=self.omega_z,
            alpha_x=self.alpha_x,
            alpha_y=self.alpha_y,
            chains=self.chains,
            ions_per_chain=self.ions_per_chain,
            chain_separation=self.chain_separation,
            axial_shift=self.axial_shift,
        )

    def fit(self, X=None, y=None):
        """Solve the equilibrium. ``X`` and ``y`` are ignored."""
        self.spec_ = self.to_spec()
        self.state_ = build_crystal(self.spec_, tol=self.tol, max_iter=self.max_iter)
        self.positions_ = self.state_.positions
        self.hessian_ = self.state_.hessian
        self.mode_frequencies_ = self.state_.mode_frequencies
        self.mode_vectors_ = self.state_.mode_vectors
        self.is_stable_ = self.state_.is_stable
        self.n_features_in_ = 3 * self.spec_.n_ions
        return self

    def transform(self, X):
        """Project displacements (m, direction-major rows) onto the modes."""
        check_is_fitted(self, "state_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} displacement components, got {X.shape[1]}")
        return X @ self.mode_vectors_

    def inverse_transform(self, Q):
        check_is_fitted(self, "state_")
        return check_array(Q) @ self.mode_vectors_.T
