"""Dense matrix kernels: exponentials, Lyapunov/Riccati solvers, ODE stepping.

Everything here operates on small dense matrices.  The matrix exponential is
scipy's scaling-and-squaring Pade implementation; the exponential integral
uses the augmented-block construction so it is well defined for singular
matrices.  The algebraic Riccati equation is solved by two independent
methods (ordered Schur form of the Hamiltonian matrix, and Newton iteration
on Lyapunov equations) which are cross-checked against each other.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import (
    DesignInfeasibleError,
    DimensionError,
    NotHurwitzError,
    SolverDisagreementError,
    StiffnessError,
)

__all__ = [
    "expm",
    "expm_integral",
    "is_hurwitz",
    "HurwitzResult",
    "solve_lyapunov",
    "solve_are",
    "OdeProblem",
    "integrate",
]


def _square(a):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"square matrix expected, got shape {a.shape}")
    return a


def expm(a):
    """Matrix exponential e^a (scaling and squaring with Pade approximants)."""
    return sla.expm(_square(a))


def expm_integral(a, t):
    """Integral of the matrix exponential, ``int_0^t e^{s a} ds``.

    Evaluated through the exponential of the augmented block matrix
    ``[[a, I], [0, 0]]`` scaled by t, whose upper-right block is the
    integral.  Unlike ``a^{-1} (e^{t a} - I)`` this is defined for singular
    ``a`` (it is the entire function (e^{t z} - 1)/z evaluated at ``a``)
    and for any real t.
    """
    a = _square(a)
    n = a.shape[0]
    blk = np.zeros((2 * n, 2 * n), dtype=np.result_type(a, float))
    blk[:n, :n] = a
    blk[:n, n:] = np.eye(n)
    return sla.expm(float(t) * blk)[:n, n:]


class HurwitzResult(NamedTuple):
    stable: bool
    abscissa: float

    def __bool__(self) -> bool:
        return self.stable


def is_hurwitz(a) -> HurwitzResult:
    """Whether all eigenvalues of ``a`` have negative real part.

    Returns the spectral abscissa alongside the flag so callers can apply
    stability margins.
    """
    a = _square(a)
    abscissa = float(np.max(np.linalg.eigvals(a).real))
    return HurwitzResult(abscissa < 0.0, abscissa)


def solve_lyapunov(a, q):
    """Solve ``a x + x a^T + q = 0`` for Hurwitz real ``a``.

    ``q`` may be complex Hermitian; the equation then splits into its real
    and imaginary parts, each solved by the Bartels-Stewart algorithm.  The
    result is Hermitized and its residual verified against
    ``1e-8 * (1 + ||q||_F)``.
    """
    a = np.asarray(_square(a), dtype=float)
    q = np.asarray(_square(q))
    if q.shape != a.shape:
        raise DimensionError("a and q must have equal shapes")
    hw = is_hurwitz(a)
    if not hw.stable:
        raise NotHurwitzError(
            f"coefficient matrix has spectral abscissa {hw.abscissa:.3e} >= 0"
        )
    # scipy solves a x + x a^H = q'; with real a this is a x + x a^T = q'
    x = sla.solve_continuous_lyapunov(a, -q.real)
    if np.iscomplexobj(q) and np.max(np.abs(q.imag), initial=0.0) > 0.0:
        x = x + 1j * sla.solve_continuous_lyapunov(a, -q.imag)
    x = 0.5 * (x + x.conj().T)
    resid = np.linalg.norm(a @ x + x @ a.T + q, "fro")
    bound = 1e-8 * (1.0 + np.linalg.norm(q, "fro"))
    if resid > bound:
        raise SolverDisagreementError(
            f"Lyapunov residual {resid:.3e} exceeds bound {bound:.3e}"
        )
    return x


def _are_residual(p, a, c, sigma, s, f):
    g = p @ c.T + s
    return a @ p + p @ a.T + sigma - g @ np.linalg.solve(f, g.T)


def _solve_are_schur(a_hat, g, q_hat):
    """Stabilizing solution of ``a x + x a^T - x g x + q = 0`` via the
    ordered real Schur form of the associated Hamiltonian matrix."""
    n = a_hat.shape[0]
    ham = np.block([[a_hat.T, -g], [-q_hat, -a_hat]])
    # order the stable eigenvalues first; their invariant subspace encodes x
    tt, uu, sdim = sla.schur(ham, sort="lhp")
    if sdim != n:
        raise DesignInfeasibleError(
            f"Hamiltonian matrix has {sdim} stable eigenvalues, expected {n}"
        )
    u1 = uu[:n, :n]
    u2 = uu[n:, :n]
    try:
        x = sla.solve(u1.T, u2.T).T
    except sla.LinAlgError as exc:
        raise DesignInfeasibleError("stable subspace is not a graph") from exc
    return 0.5 * (x + x.T)


def _solve_are_newton(a_hat, g, q_hat, x0=None, max_iter=60, tol=1e-13):
    """Newton iteration for ``a x + x a^T - x g x + q = 0``.

    Each step solves a Lyapunov equation with the current closed-loop
    matrix; convergence is quadratic from any stabilizing iterate.  Seeded
    at zero when ``a`` itself is Hurwitz, otherwise from ``x0``.
    """
    n = a_hat.shape[0]
    x = np.zeros((n, n)) if x0 is None else 0.5 * (x0 + x0.T)
    scale = 1.0 + np.linalg.norm(q_hat, "fro")
    for _ in range(max_iter):
        a_cl = a_hat - x @ g
        hw = is_hurwitz(a_cl)
        if not hw.stable:
            raise DesignInfeasibleError(
                f"Newton iterate lost stability (abscissa {hw.abscissa:.3e})"
            )
        rhs = q_hat + x @ g @ x
        x_new = sla.solve_continuous_lyapunov(a_cl, -rhs)
        x_new = 0.5 * (x_new + x_new.T)
        step = np.linalg.norm(x_new - x, "fro")
        x = x_new
        if step <= tol * scale:
            break
    return x


def solve_are(a, c, sigma, b, d, f):
    """Stabilizing solution of the estimation algebraic Riccati equation

        a p + p a^T + sigma - (p c^T + b d^T) f^{-1} (c p + d b^T) = 0.

    Parameters follow the observer design problem: ``a`` (n, n) drift,
    ``c`` (r, n) observation matrix, ``sigma`` (n, n) PSD process noise,
    ``b`` (n, m) dispersion value, ``d`` (r, m) measurement map and
    ``f = d d^T`` (r, r) SPD measurement noise.

    Two independent solvers are run (Hamiltonian Schur subspace and Newton
    iteration) and must agree to 1e-6; the returned solution additionally
    satisfies the residual bound 1e-8 (scaled) and leaves ``a - k c``
    Hurwitz for the induced gain ``k``.
    """
    a = np.asarray(_square(a), dtype=float)
    n = a.shape[0]
    c = np.atleast_2d(np.asarray(c, dtype=float))
    sigma = np.asarray(sigma, dtype=float)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    d = np.atleast_2d(np.asarray(d, dtype=float))
    f = np.atleast_2d(np.asarray(f, dtype=float))
    r = c.shape[0]
    if c.shape[1] != n or sigma.shape != (n, n) or f.shape != (r, r):
        raise DimensionError("inconsistent ARE dimensions")
    if d.shape[0] != r or b.shape[0] != n or b.shape[1] != d.shape[1]:
        raise DimensionError("inconsistent ARE dimensions")
    fmin = float(np.min(np.linalg.eigvalsh(0.5 * (f + f.T))))
    if fmin <= 0.0:
        raise DesignInfeasibleError(f"f is not positive definite (min eig {fmin:.3e})")

    # absorb the cross term: s = b d^T, a_hat = a - s f^-1 c,
    # q_hat = sigma - s f^-1 s^T, g = c^T f^-1 c
    s = b @ d.T
    finv_c = sla.solve(f, c, assume_a="pos")
    finv_st = sla.solve(f, s.T, assume_a="pos")
    a_hat = a - s @ finv_c
    q_hat = sigma - s @ finv_st
    q_hat = 0.5 * (q_hat + q_hat.T)
    g = c.T @ finv_c
    g = 0.5 * (g + g.T)

    p1 = _solve_are_schur(a_hat, g, q_hat)
    x0 = None if is_hurwitz(a_hat).stable else p1
    p2 = _solve_are_newton(a_hat, g, q_hat, x0=x0)
    scale = 1.0 + np.linalg.norm(p1, "fro")
    gap = np.linalg.norm(p1 - p2, "fro")
    if gap > 1e-6 * scale:
        raise SolverDisagreementError(
            f"Schur and Newton ARE solutions differ by {gap:.3e}"
        )
    p = 0.5 * (p1 + p2)
    p = 0.5 * (p + p.T)

    resid = np.linalg.norm(_are_residual(p, a, c, sigma, s, f), "fro")
    bound = 1e-8 * (1.0 + np.linalg.norm(sigma, "fro") + np.linalg.norm(p, "fro") ** 2)
    if resid > bound:
        raise DesignInfeasibleError(f"ARE residual {resid:.3e} exceeds {bound:.3e}")
    k = sla.solve(f, (p @ c.T + s).T, assume_a="pos").T
    hw = is_hurwitz(a - k @ c)
    if not hw.stable:
        raise DesignInfeasibleError(
            f"closed loop not Hurwitz (abscissa {hw.abscissa:.3e})"
        )
    pmin = float(np.min(np.linalg.eigvalsh(p)))
    if pmin < -1e-8 * scale:
        raise DesignInfeasibleError(f"stabilizing solution indefinite ({pmin:.3e})")
    return p


@dataclass(frozen=True)
class OdeProblem:
    """Initial value problem ``y' = f(t, y)`` on [t0, t_end].

    With ``step`` set, the classical fixed-step 4th order Runge-Kutta scheme
    is used (the last step is shortened to land on ``t_end``).  Otherwise an
    embedded 5(4) Dormand-Prince pair adapts the step to the requested
    tolerances; step-size underflow raises :class:`StiffnessError`.
    """

    f: Callable
    t0: float
    y0: np.ndarray
    t_end: float
    step: float | None = None
    atol: float = 1e-10
    rtol: float = 1e-8

    def __post_init__(self):
        if self.t_end < self.t0:
            raise DimensionError("t_end must not precede t0")
        object.__setattr__(self, "y0", np.atleast_1d(np.asarray(self.y0)))


def _rk4_fixed(f, t0, y0, t_end, h):
    ts = [t0]
    ys = [y0]
    t, y = t0, y0
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        hh = min(h, t_end - t)
        k1 = f(t, y)
        k2 = f(t + 0.5 * hh, y + 0.5 * hh * k1)
        k3 = f(t + 0.5 * hh, y + 0.5 * hh * k2)
        k4 = f(t + hh, y + hh * k3)
        y = y + (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t + hh
        ts.append(t)
        ys.append(y)
    return np.array(ts), np.array(ys)


# Dormand-Prince 5(4) tableau
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (
    5179 / 57600,
    0.0,
    7571 / 16695,
    393 / 640,
    -92097 / 339200,
    187 / 2100,
    1 / 40,
)


def _rk45_adaptive(f, t0, y0, t_end, atol, rtol):
    span = t_end - t0
    if span == 0.0:
        return np.array([t0]), np.array([y0])
    h = span / 100.0
    hmin = 1e-12 * max(1.0, span)
    t, y = t0, y0
    ts, ys = [t0], [y0]
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        h = min(h, t_end - t)
        ks = []
        for i in range(7):
            yi = y
            for aij, kj in zip(_DP_A[i], ks):
                yi = yi + h * aij * kj
            ks.append(f(t + _DP_C[i] * h, yi))
        y5 = y + h * sum(b * k for b, k in zip(_DP_B5, ks))
        y4 = y + h * sum(b * k for b, k in zip(_DP_B4, ks))
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.sqrt(np.mean(np.abs((y5 - y4) / scale) ** 2)))
        if err <= 1.0:
            t = t + h
            y = y5
            ts.append(t)
            ys.append(y)
        factor = 0.9 * (1.0 / err) ** 0.2 if err > 0.0 else 5.0
        h = h * min(5.0, max(0.2, factor))
        if h < hmin:
            raise StiffnessError(f"step size underflow at t = {t:.6g}")
    return np.array(ts), np.array(ys)


def integrate(problem: OdeProblem):
    """Integrate an :class:`OdeProblem`; returns (times, states) arrays."""
    if problem.step is not None:
        if problem.step <= 0.0:
            raise DimensionError("step must be positive")
        return _rk4_fixed(problem.f, problem.t0, problem.y0, problem.t_end, problem.step)
    return _rk45_adaptive(
        problem.f, problem.t0, problem.y0, problem.t_end, problem.atol, problem.rtol
    )
