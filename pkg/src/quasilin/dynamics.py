"""Drift/dispersion synthesis and one-point moment dynamics.

Given a plant specification (structure constants, energy vector E, coupling
matrix M, coupling offset N) the affine drift ``A x + b`` and the linear
dispersion factor ``B(x) = 2 (theta . x) M^T`` of the variable dynamics are
synthesized in closed form.  On top of these coefficients the module evolves
the mean vector and the one-point quantum covariance matrix, computes the
invariant state (by two independent routes that are cross-checked), the
stationary spectral density, and the rank-based stability certificate for
plants built on the Pauli preset.
"""

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .algebra import StructureConstants, diamond_product, dot_product
from .errors import DimensionError, NotHurwitzError, SolverDisagreementError
from .linalg import expm, expm_integral, is_hurwitz, solve_lyapunov

__all__ = [
    "SystemSpec",
    "CoefficientSet",
    "MomentState",
    "InvariantState",
    "PauliStability",
    "ito_matrices",
    "synthesize",
    "closed_form_mean",
    "mean_trajectory",
    "covariance_trajectory",
    "v_of_mu",
    "invariant_state",
    "spectral_density",
    "pauli_stability",
]


def _readonly(a):
    a.setflags(write=False)
    return a


def ito_matrices(m: int):
    """The Ito table of an m-channel vacuum field: J block matrix and
    Omega = I + iJ.  Requires even m."""
    if m <= 0 or m % 2:
        raise DimensionError(f"number of field channels must be even, got {m}")
    half = m // 2
    j = np.zeros((m, m))
    j[:half, half:] = np.eye(half)
    j[half:, :half] = -np.eye(half)
    return j, np.eye(m) + 1j * j


@dataclass(frozen=True)
class SystemSpec:
    """Plant definition: structure constants plus coupling parameters.

    The Hamiltonian is ``E . X`` and the m coupling operators are the
    entries of ``M X + N``; m must be even.
    """

    constants: StructureConstants
    E: np.ndarray
    M: np.ndarray
    N: np.ndarray

    def __post_init__(self):
        n = self.constants.n
        e = np.asarray(self.E, dtype=float).reshape(-1)
        m_mat = np.atleast_2d(np.asarray(self.M, dtype=float))
        nvec = np.asarray(self.N, dtype=float).reshape(-1)
        if e.shape != (n,):
            raise DimensionError(f"E must have length {n}")
        if m_mat.shape[1] != n:
            raise DimensionError(f"M must have {n} columns, got {m_mat.shape}")
        m = m_mat.shape[0]
        if m % 2:
            raise DimensionError(f"M must have an even number of rows, got {m}")
        if nvec.shape != (m,):
            raise DimensionError(f"N must have length {m}")
        object.__setattr__(self, "E", _readonly(e))
        object.__setattr__(self, "M", _readonly(m_mat))
        object.__setattr__(self, "N", _readonly(nvec))

    @property
    def n(self) -> int:
        return self.constants.n

    @property
    def m(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class CoefficientSet:
    """Synthesized dynamics coefficients ``dX = (A X + b) dt + B(X) dW``.

    ``A`` and ``b`` are real; the dispersion factor ``B(x) = 2 (theta.x) M^T``
    is available through :meth:`dispersion` and is linear in x.  ``J`` and
    ``Omega = I + iJ`` form the Ito table of the driving field.  The source
    :class:`SystemSpec` is kept so downstream operations can reach the
    structure constants.
    """

    A: np.ndarray
    b: np.ndarray
    J: np.ndarray
    Omega: np.ndarray
    spec: SystemSpec

    def __post_init__(self):
        for name in ("A", "b", "J", "Omega"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name))))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @cached_property
    def dispersion_stack(self) -> np.ndarray:
        """Stack ``s`` with ``B(x) = sum_l x_l s[l]``, shape (n, n, m)."""
        sc = self.spec.constants
        s = 2.0 * np.einsum("abl,mb->lam", sc.theta, self.spec.M)
        return _readonly(s)

    def dispersion(self, x) -> np.ndarray:
        """Dispersion factor ``B(x)``, an (n, m) real matrix for real x."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionError(f"x must have length {self.n}")
        return np.tensordot(x, self.dispersion_stack, axes=(0, 0))

    @cached_property
    def _v_parts(self):
        # affine decomposition V(mu) = v0 + sum_l mu_l vl[l] of the
        # covariance inhomogeneity E(B(X) Omega B(X)^T)
        sc = self.spec.constants
        core = self.spec.M.T @ self.Omega @ self.spec.M
        tstack = np.ascontiguousarray(sc.theta.transpose(2, 0, 1)).astype(complex)
        w = tstack @ core
        gram = np.einsum("jab,kbc->jkac", w, tstack)
        v0 = -4.0 * np.einsum("jk,jkac->ac", sc.alpha, gram)
        vl = -4.0 * np.einsum("jkl,jkac->lac", sc.beta, gram)
        return _readonly(v0), _readonly(vl)


def synthesize(spec: SystemSpec) -> CoefficientSet:
    """Closed-form drift and dispersion coefficients of the plant QSDE.

    The drift matrix combines a Hamiltonian-rotation part
    ``2 theta <> (E + M^T J N)`` (``<>`` denoting the diamond product) with a
    coupling-induced part summing ``2 Theta_l M^T (M Theta_l.. + J M Re
    beta_l..)`` over l, where ``Theta_l`` fixes the last beta index and
    ``Theta_l..`` / ``Re beta_l..`` fix the first.  The two slicings agree
    for the Pauli preset but differ for general constants; conflating them
    is the classic bug here, so both accessors come from
    :class:`StructureConstants` and are used exactly as named.
    """
    sc = spec.constants
    if not sc.alpha_is_real:
        raise DimensionError("synthesize requires real alpha")
    n = sc.n
    theta = sc.theta
    re_beta = np.ascontiguousarray(sc.beta.real)
    alpha = np.ascontiguousarray(sc.alpha.real)
    j, omega = ito_matrices(spec.m)
    mt = spec.M.T

    a = 2.0 * diamond_product(theta, spec.E + mt @ j @ spec.N)
    b = np.zeros(n)
    for l in range(n):
        sect = theta[:, :, l]
        a = a + 2.0 * sect @ mt @ (spec.M @ theta[l] + j @ spec.M @ re_beta[l])
        b = b + 2.0 * sect @ mt @ j @ spec.M @ alpha[:, l]
    return CoefficientSet(A=a, b=b, J=j, Omega=omega, spec=spec)


@dataclass(frozen=True)
class MomentState:
    """First and second one-point moments at a given time.

    ``cov`` must be Hermitian; its real part is symmetric and its imaginary
    part antisymmetric.  Use :meth:`from_mean` to build the state of any
    system whose covariance is pinned to the mean by the product closure,
    ``cov = alpha + beta . mu - mu mu^T``.
    """

    t: float
    mu: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=complex)
        n = mu.shape[0]
        if cov.shape != (n, n):
            raise DimensionError(f"cov must be {n}x{n}")
        herm = np.max(np.abs(cov - cov.conj().T), initial=0.0)
        if herm > 1e-10 * (1.0 + np.max(np.abs(cov), initial=0.0)):
            raise DimensionError(f"cov is not Hermitian (residual {herm:.3e})")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "mu", _readonly(mu))
        object.__setattr__(self, "cov", _readonly(0.5 * (cov + cov.conj().T)))

    @classmethod
    def from_mean(cls, sc: StructureConstants, mu, t: float = 0.0) -> "MomentState":
        mu = np.asarray(mu, dtype=float).reshape(-1)
        cov = sc.alpha + sc.dot(mu) - np.outer(mu, mu)
        return cls(t=t, mu=mu, cov=cov)

    def admissibility(self, sc: StructureConstants):
        """(smallest covariance eigenvalue, residual against the pinned
        covariance).  Negative eigenvalues or a large residual mean the
        state is not realizable by any density operator."""
        floor = float(np.min(np.linalg.eigvalsh(self.cov)))
        pinned = sc.alpha + sc.dot(self.mu) - np.outer(self.mu, self.mu)
        return floor, float(np.max(np.abs(self.cov - pinned)))


class _ClosedFormMean:
    """Mean trajectory ``mu(t) = e^{(t-t0)A} mu0 + Psi(t-t0) b`` with
    per-offset caching of the propagator pair."""

    def __init__(self, coeffs: CoefficientSet, mu0, t0: float = 0.0):
        self.coeffs = coeffs
        self.mu0 = np.asarray(mu0, dtype=float).reshape(-1)
        if self.mu0.shape != (coeffs.n,):
            raise DimensionError(f"mu0 must have length {coeffs.n}")
        self.t0 = float(t0)
        self._cache = {}

    def propagators(self, dt: float):
        key = float(dt)
        hit = self._cache.get(key)
        if hit is None:
            hit = (expm(dt * self.coeffs.A), expm_integral(self.coeffs.A, dt) @ self.coeffs.b)
            self._cache[key] = hit
        return hit

    def __call__(self, t: float) -> np.ndarray:
        dt = float(t) - self.t0
        if dt < 0:
            raise DimensionError("mean requested before the initial time")
        ea, psib = self.propagators(dt)
        return ea @ self.mu0 + psib


def closed_form_mean(coeffs: CoefficientSet, mu0, t0: float = 0.0):
    """Callable ``t -> mu(t)`` evaluating the mean ODE flow in closed form."""
    return _ClosedFormMean(coeffs, mu0, t0)


def _check_grid(grid):
    ts = np.asarray(grid, dtype=float).reshape(-1)
    if ts.size < 1:
        raise DimensionError("empty time grid")
    if ts.size > 1 and np.any(np.diff(ts) <= 0.0):
        raise DimensionError("time grid must be strictly increasing")
    return ts


def _mean_half_grid(coeffs: CoefficientSet, mu0, ts):
    """Means at the grid points and interval midpoints, propagated exactly
    interval by interval (one expm per distinct half step)."""
    mu0 = np.asarray(mu0, dtype=float).reshape(-1)
    nsteps = ts.size - 1
    out = np.empty((2 * nsteps + 1, coeffs.n))
    out[0] = mu0
    cache = {}
    for k in range(nsteps):
        h = 0.5 * (ts[k + 1] - ts[k])
        hit = cache.get(h)
        if hit is None:
            hit = (expm(h * coeffs.A), expm_integral(coeffs.A, h) @ coeffs.b)
            cache[h] = hit
        ea, psib = hit
        out[2 * k + 1] = ea @ out[2 * k] + psib
        out[2 * k + 2] = ea @ out[2 * k + 1] + psib
    return out


def mean_trajectory(coeffs: CoefficientSet, mu0, grid):
    """Mean vector sampled on the grid; exact up to expm accuracy.

    Returns (times, means) with means of shape (len(grid), n).
    """
    ts = _check_grid(grid)
    half = _mean_half_grid(coeffs, mu0, ts)
    return ts, half[::2].copy()


def v_of_mu(coeffs: CoefficientSet, mu) -> np.ndarray:
    """Covariance inhomogeneity ``V(mu) = E(B(X) Omega B(X)^T)``.

    Hermitian, and positive semi-definite whenever ``alpha + beta . mu`` is
    (in particular for every admissible mean vector).
    """
    v0, vl = coeffs._v_parts
    mu = np.asarray(mu, dtype=float)
    v = v0 + np.tensordot(mu, vl, axes=(0, 0))
    return 0.5 * (v + v.conj().T)


def covariance_trajectory(coeffs: CoefficientSet, state0: MomentState, grid):
    """Quantum covariance along the flow, from the Lyapunov ODE
    ``cov' = A cov + cov A^T + V(mu(t))``.

    The mean entering V is propagated in closed form; the matrix ODE is
    stepped with fixed-step RK4 (numba kernel) and Hermitized every step.
    Inadmissible initial states are warned about, not rejected.

    Returns (times, covariances) with covariances of shape (len(grid), n, n).
    """
    ts = _check_grid(grid)
    if abs(ts[0] - state0.t) > 1e-12 * (1.0 + abs(state0.t)):
        raise DimensionError("grid must start at the initial state's time")
    sc = coeffs.spec.constants
    floor, resid = state0.admissibility(sc)
    if floor < -1e-8 * (1.0 + np.max(np.abs(state0.cov))):
        warnings.warn(f"initial covariance is indefinite (min eig {floor:.3e})")
    elif resid > 1e-8 * (1.0 + np.max(np.abs(state0.cov))):
        warnings.warn(
            f"initial covariance is not pinned to the mean (residual {resid:.3e})"
        )
    if ts.size == 1:
        return ts, state0.cov[None, :, :].copy()
    mu_half = _mean_half_grid(coeffs, state0.mu, ts)
    v0, vl = coeffs._v_parts
    v_half = v0[None, :, :] + np.einsum("il,lab->iab", mu_half, vl)
    v_half = 0.5 * (v_half + v_half.conj().transpose(0, 2, 1))
    covs = _kernels.lyap_rk4(
        np.ascontiguousarray(coeffs.A, dtype=complex),
        np.ascontiguousarray(v_half),
        np.ascontiguousarray(state0.cov, dtype=complex),
        np.ascontiguousarray(np.diff(ts)),
    )
    return ts, covs


@dataclass(frozen=True)
class InvariantState:
    """Limit state of a stable plant: mean, covariance and noise moment.

    ``cov`` solves the algebraic Lyapunov equation
    ``A cov + cov A^T + upsilon = 0`` and coincides with the algebraically
    pinned covariance ``alpha + beta . mu - mu mu^T``; ``route_gap`` is the
    maximal entrywise disagreement between the two computations.
    """

    mu: np.ndarray
    cov: np.ndarray
    upsilon: np.ndarray
    route_gap: float


def invariant_state(coeffs: CoefficientSet) -> InvariantState:
    """Invariant mean and covariance of a plant with Hurwitz drift.

    The covariance is computed both from the Lyapunov equation (driven by
    ``upsilon = V(mu_inf)``) and from the product-closure identity; the two
    routes must agree, which jointly exercises the synthesized A, b and the
    noise moment.
    """
    hw = is_hurwitz(coeffs.A)
    if not hw.stable:
        raise NotHurwitzError(
            f"no invariant state: drift abscissa {hw.abscissa:.3e} >= 0"
        )
    sc = coeffs.spec.constants
    mu = -np.linalg.solve(coeffs.A, coeffs.b)
    upsilon = v_of_mu(coeffs, mu)
    cov_ale = solve_lyapunov(np.asarray(coeffs.A, dtype=float), upsilon)
    cov_alg = sc.alpha + sc.dot(mu) - np.outer(mu, mu)
    gap = float(np.max(np.abs(cov_ale - cov_alg)))
    if gap > 1e-6 * (1.0 + np.max(np.abs(cov_alg))):
        raise SolverDisagreementError(
            f"Lyapunov and algebraic invariant covariances differ by {gap:.3e}"
        )
    return InvariantState(mu=mu, cov=cov_ale, upsilon=upsilon, route_gap=gap)


def spectral_density(coeffs: CoefficientSet, cov, upsilon, omega: float) -> np.ndarray:
    """Stationary spectral density at angular frequency ``omega``.

    Two equivalent expressions are evaluated, the resolvent difference
    ``R cov - cov R2`` and the sandwich ``R upsilon R*`` with
    ``R = (i w I - A)^{-1}``; they must agree to 1e-9.  The returned matrix
    is the (exactly Hermitian) sandwich form.
    """
    a = np.asarray(coeffs.A, dtype=float)
    n = a.shape[0]
    eye = np.eye(n)
    try:
        res = np.linalg.solve(1j * omega * eye - a, eye)
        res2 = np.linalg.solve(1j * omega * eye + a.T, eye)
    except np.linalg.LinAlgError as exc:  # only reachable for non-Hurwitz A
        raise NotHurwitzError(f"resolvent singular at omega = {omega}") from exc
    s_diff = res @ cov - cov @ res2
    s_sand = res @ upsilon @ res.conj().T
    gap = float(np.max(np.abs(s_diff - s_sand)))
    if gap > 1e-9 * (1.0 + np.max(np.abs(s_sand))):
        raise SolverDisagreementError(
            f"spectral density routes differ by {gap:.3e} at omega = {omega}"
        )
    return 0.5 * (s_sand + s_sand.conj().T)


@dataclass(frozen=True)
class PauliStability:
    """Rank-based stability certificate for plants on the Pauli preset.

    ``complement`` is ``|M|_F^2 I - M^T M`` (written with the
    Frobenius norm); its spectrum consists of the pairwise sums of the
    eigenvalues of ``M^T M``, so it is positive definite exactly when
    ``rank M >= 2``, in which case ``A + A^T = -4 * complement`` < 0 and the
    drift is Hurwitz for every E and N.
    """

    complement: np.ndarray
    spectrum: np.ndarray
    coupling_rank: int
    hurwitz_guaranteed: bool


def pauli_stability(m_mat) -> PauliStability:
    """Evaluate the rank condition certifying a Hurwitz drift (n = 3)."""
    m_mat = np.atleast_2d(np.asarray(m_mat, dtype=float))
    if m_mat.shape[1] != 3:
        raise DimensionError("stability certificate applies to m x 3 couplings")
    gram = m_mat.T @ m_mat
    comp = np.trace(gram) * np.eye(3) - gram
    spectrum = np.linalg.eigvalsh(comp)
    rank = int(np.linalg.matrix_rank(m_mat))
    return PauliStability(
        complement=comp,
        spectrum=spectrum,
        coupling_rank=rank,
        hurwitz_guaranteed=rank >= 2,
    )
