"""Exact ground states and frustration diagnostics of Ising coupling matrices.

Energies follow ``E/hbar = -1/2 sum_{n<m} J_nm s_n s_m`` with ``s = +-1``,
in the units of ``J`` (rad/s for a :class:`~ionmagic.coupling.CouplingMatrix`).
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_spins, check_square_symmetric

# The exhaustive search visits 2**(n-1) configurations.
MAX_SPINS = 26
DEFAULT_MAX_STATES = 4096


def _as_matrix(J):
    M = getattr(J, "J", J)
    M = np.array(check_square_symmetric(M, "J", rtol=1e-10), dtype=float)
    np.fill_diagonal(M, 0.0)
    return M


def ising_energy(J, spins):
    """Energy ``-1/2 sum_{n<m} J_nm s_n s_m`` of one or several configurations.

    Parameters
    ----------
    J : CouplingMatrix or array-like, shape (n, n)
        The diagonal is ignored.
    spins : array-like, shape (n,) or (k, n)
        Entries +1 or -1.

    Returns
    -------
    float or ndarray
    """
    M = _as_matrix(J)
    s = check_spins(spins, len(M))
    if s.ndim == 1:
        return float(-0.25 * s @ M @ s)
    return -0.25 * np.einsum("ki,ij,kj->k", s, M, s)


def _all_spins(n):
    """All 2**n configurations of n spins, bit b of the index -> spin b (0 -> +1)."""
    idx = np.arange(2**n, dtype=np.int64)[:, None]
    bits = (idx >> np.arange(n, dtype=np.int64)) & 1
    return 1 - 2 * bits.astype(np.int8)


@dataclass(frozen=True)
class GroundState:
    """All minimizing configurations up to the global spin flip.

    ``configurations`` are canonical (first spin +1). ``degeneracy`` counts
    every minimum up to flip even when only the first ``max_states`` are
    stored (then ``truncated`` is True).
    """

    energy: float
    configurations: np.ndarray
    degeneracy: int
    truncated: bool = False

    @property
    def n_spins(self):
        return self.configurations.shape[1]

    @property
    def extra_degeneracy(self):
        """Number of ground states beyond the global-flip pair."""
        return self.degeneracy - 1


def ground_state(J, rtol=1e-12, max_states=DEFAULT_MAX_STATES, chunk=512):
    """Exact Ising ground state(s) by exhaustive enumeration.

    Spin 1 is fixed to +1 and the remaining spins are split into a low and a
    high half: the energy of every low-half configuration is tabulated once
    and combined with blocks of high-half configurations through one matrix
    product, which keeps the search vectorized.

    Parameters
    ----------
    J : CouplingMatrix or array-like
    rtol : float
        Configurations within ``rtol * scale`` of the minimum are degenerate,
        with ``scale = 1/2 sum_{n<m} |J_nm|`` (the largest possible |E|).
    max_states : int
        Maximum number of minimizing configurations stored.
    chunk : int
        High-half configurations per block.

    Returns
    -------
    GroundState

    Raises
    ------
    ValueError
        For more than 26 spins.
    """
    M = _as_matrix(J)
    n = len(M)
    if n > MAX_SPINS:
        raise ValueError(
            f"{n} spins exceed the exhaustive-search bound of {MAX_SPINS}; truncate J to a sub-block first"
        )
    if n == 1:
        return GroundState(0.0, np.ones((1, 1), dtype=np.int8), 1)
    scale = 0.25 * np.abs(M).sum()
    tol = rtol * scale if scale > 0 else 0.0

    rest = n - 1
    n_lo = min(rest, max(1, (rest + 1) // 2))
    n_hi = rest - n_lo
    lo = np.arange(1, 1 + n_lo)
    hi = np.arange(1 + n_lo, n)
    S_lo = _all_spins(n_lo).astype(float)
    S_hi = _all_spins(n_hi).astype(float)
    # energy of spin 0 (= +1) together with the low half
    idx_lo = np.concatenate([[0], lo])
    S0lo = np.hstack([np.ones((len(S_lo), 1)), S_lo])
    E_lo = -0.25 * np.einsum("ki,ij,kj->k", S0lo, M[np.ix_(idx_lo, idx_lo)], S0lo)
    # high half with itself and with spin 0
    E_hi = -0.25 * np.einsum("ki,ij,kj->k", S_hi, M[np.ix_(hi, hi)], S_hi) - 0.5 * S_hi @ M[hi, 0]
    C = M[np.ix_(lo, hi)]

    best = np.inf
    found = []  # (energy, hi_index, lo_index) arrays
    count = 0
    for start in range(0, len(S_hi), chunk):
        sh = S_hi[start:start + chunk]
        E = E_lo[:, None] + E_hi[start:start + chunk][None, :] - 0.5 * S_lo @ (C @ sh.T)
        emin = E.min()
        if emin < best - tol:
            best = emin
            found, count = [], 0
        best = min(best, emin)
        li, hj = np.nonzero(E <= best + tol)
        if li.size:
            found.append((E[li, hj], hj + start, li))
    # drop entries that were within tol of an older, slightly higher minimum
    Es = np.concatenate([f[0] for f in found])
    H = np.concatenate([f[1] for f in found])
    L = np.concatenate([f[2] for f in found])
    keep = Es <= best + tol
    H, L = H[keep], L[keep]
    count = int(keep.sum())
    order = np.lexsort((L, H))[:max_states]
    configs = np.hstack([np.ones((len(order), 1)), S_lo[L[order]], S_hi[H[order]]]).astype(np.int8)
    energy = float(ising_energy(M, configs[0]))
    return GroundState(energy, configs, count, count > max_states)


# -- frustration -----------------------------------------------------------------------


@dataclass(frozen=True)
class FrustrationReport:
    """Block maxima and frustration signals of a two-chain coupling matrix.

    Attributes
    ----------
    intra_max, inter_max : float
        Largest |J| inside a chain and between chains (units of J).
    ratio : float
        ``intra_max / inter_max``.
    degenerate_ground_state_count : int
        Ground states beyond the global-flip pair.
    unsatisfied_bond_fraction : float
        Fraction of non-zero bonds with ``J_nm s_n s_m < 0`` in the first
        ground state.
    unsatisfied_weight_fraction : float
        Same, weighted by ``|J_nm|``.
    triple_asymmetry : ndarray
        For every pair of neighbours in one chain and the ion of the other
        chain closest to their midpoint, the relative difference of the two
        cross-chain distances. Zero means an exactly isosceles triangle,
        the condition for exact frustration of that triple.
    ground_state : GroundState
    """

    intra_max: float
    inter_max: float
    ratio: float
    degenerate_ground_state_count: int
    unsatisfied_bond_fraction: float
    unsatisfied_weight_fraction: float
    triple_asymmetry: np.ndarray
    ground_state: GroundState


def triple_asymmetry(positions, ions_per_chain):
    """Relative asymmetry of every cross-chain triangle, see :class:`FrustrationReport`."""
    X = np.asarray(positions, dtype=float)
    N = ions_per_chain
    out = []
    for a, b in ((slice(0, N), slice(N, 2 * N)), (slice(N, 2 * N), slice(0, N))):
        A, B = X[a], X[b]
        for k in range(N - 1):
            mid = 0.5 * (A[k, 2] + A[k + 1, 2])
            j = int(np.argmin(np.abs(B[:, 2] - mid)))
            r1 = np.linalg.norm(A[k] - B[j])
            r2 = np.linalg.norm(A[k + 1] - B[j])
            out.append(abs(r1 - r2) / (0.5 * (r1 + r2)))
    return np.array(out)


def frustration_report(J, layout, state=None, rtol=1e-12):
    """Frustration diagnostics for two chains.

    Parameters
    ----------
    J : CouplingMatrix or array-like, shape (2N, 2N)
    layout : TrapSpec
        Two-chain layout, ions ordered chain-major.
    state : CrystalState, optional
        Equilibrium used for the triangle asymmetry; solved if missing.
    """
    if layout.chains != 2:
        raise ValueError("frustration report needs two chains")
    M = _as_matrix(J)
    N = layout.ions_per_chain
    if len(M) != 2 * N:
        raise ValueError(f"J has {len(M)} spins, layout has {2 * N}")
    iu = np.triu_indices(N, 1)
    intra = np.concatenate([M[:N, :N][iu], M[N:, N:][iu]])
    inter = M[:N, N:].ravel()
    intra_max = float(np.abs(intra).max()) if intra.size else 0.0
    inter_max = float(np.abs(inter).max())
    ratio = intra_max / inter_max if inter_max > 0 else np.inf

    gs = ground_state(M, rtol=rtol)
    s = gs.configurations[0].astype(float)
    ju = np.triu_indices(2 * N, 1)
    bonds = M[ju]
    sat = bonds * s[ju[0]] * s[ju[1]]
    nz = bonds != 0
    unsat = sat[nz] < 0
    frac = float(unsat.mean()) if nz.any() else 0.0
    wfrac = float(np.abs(bonds[nz])[unsat].sum() / np.abs(bonds[nz]).sum()) if nz.any() else 0.0

    if state is None:
        from .crystal import solve_equilibrium

        state = solve_equilibrium(layout)
    asym = triple_asymmetry(state.positions_dimensionless, N)
    return FrustrationReport(intra_max, inter_max, ratio, gs.extra_degeneracy, frac, wfrac, asym, gs)


# -- estimator -------------------------------------------------------------------------


class IsingGroundState(BaseEstimator):
    """Estimator wrapper around :func:`ground_state`.

    ``fit(J)`` takes a coupling matrix (array or CouplingMatrix); ``predict``
    returns energies of spin configurations.

    Attributes
    ----------
    ground_states_ : ndarray
        Canonical minimizing configurations.
    energy_ : float
    degeneracy_ : int
    """

    def __init__(self, rtol=1e-12, max_states=DEFAULT_MAX_STATES):
        self.rtol = rtol
        self.max_states = max_states

    def fit(self, X, y=None):
        self.J_ = _as_matrix(X)
        gs = ground_state(self.J_, rtol=self.rtol, max_states=self.max_states)
        self.result_ = gs
        self.ground_states_ = gs.configurations
        self.energy_ = gs.energy
        self.degeneracy_ = gs.degeneracy
        self.n_features_in_ = len(self.J_)
        return self

    def predict(self, X):
        check_is_fitted(self, "J_")
        return np.atleast_1d(ising_energy(self.J_, X))


def classify_order(spins, chains=1, ions_per_chain=None):
    """Name the order of a spin configuration.

    Single chain: ``"ferromagnetic"``, ``"neel"`` (alternating) or ``"other"``.
    Two chains: ``"<intra>/<inter>"`` where each chain is ``ferromagnetic``,
    ``neel`` or ``other`` and the inter part compares the chains ion by ion:
    ``"aligned"``, ``"antialigned"`` or ``"mixed"``.
    """
    s = check_spins(spins)
    n = len(s)
    N = n // chains if ions_per_chain is None else ions_per_chain
    if chains * N != n:
        raise ValueError(f"{n} spins do not split into {chains} chains of {N}")

    def one(c):
        if len(c) == 1 or np.all(c == c[0]):
            return "ferromagnetic"
        if np.all(c[1:] == -c[:-1]):
            return "neel"
        return "other"

    if chains == 1:
        return one(s)
    a, b = s[:N], s[N:]
    ia, ib = one(a), one(b)
    intra = ia if ia == ib else "other"
    inter = "aligned" if np.all(a == b) else "antialigned" if np.all(a == -b) else "mixed"
    return f"{intra}/{inter}"
