"""Structure constants of operator algebras with quadratic closure.

The systems handled by this package have self-adjoint dynamic variables
X_1, ..., X_n whose pairwise products close affinely on the variables
themselves,

    X_j X_k = alpha[j, k] * I + sum_l beta[j, k, l] * X_l,

so every polynomial in the variables reduces to an affine function of them.
This module stores and validates the constant arrays (alpha, beta) and
implements the purely algebraic constructions built on them: quadratic-form
reduction, operator norm bounds, variable shifts, the two three-index
products and the commutation matrix.

All arrays are dense; ``beta`` is stored with index order (j, k, l) matching
the closure relation above.  Three different 2-d slices of ``beta`` occur in
the coefficient formulas of :mod:`quasilin.dynamics`; they are provided as
explicit accessors to keep the index conventions in one place.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionError, InadmissibleConstantsError

__all__ = [
    "StructureConstants",
    "ValidationReport",
    "OperatorVectorAffine",
    "validate",
    "reduce_quadratic",
    "norm_bound",
    "shift_constants",
    "dot_product",
    "diamond_product",
    "ccr_matrix",
    "pauli_preset",
]

DEFAULT_TOL = 1e-10

CHECK_NAMES = ("alpha_hermitian", "section_hermitian", "assoc_constant", "assoc_linear")


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StructureConstants:
    """Constant arrays defining the product closure of the variables.

    Parameters
    ----------
    alpha : (n, n) array_like
        Hermitian coefficient of the identity in each product X_j X_k.
        Real symmetric for every shipped preset; shifted constants may
        carry an antisymmetric imaginary part.
    beta : (n, n, n) array_like
        Complex coefficients of the variables, entry ``beta[j, k, l]``
        multiplying X_l in the product X_j X_k.  Every section
        ``beta[:, :, l]`` must be Hermitian.

    Derived arrays ``theta`` (imaginary part of beta) and ``tau`` (traces of
    the sections) are computed on construction.  Instances are immutable and
    safe to share between threads.
    """

    alpha: np.ndarray
    beta: np.ndarray
    theta: np.ndarray = field(init=False, repr=False)
    tau: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=complex)
        beta = np.array(self.beta, dtype=complex)
        if alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1]:
            raise DimensionError(f"alpha must be square, got shape {alpha.shape}")
        n = alpha.shape[0]
        if beta.shape != (n, n, n):
            raise DimensionError(
                f"beta must have shape {(n, n, n)}, got {beta.shape}"
            )
        object.__setattr__(self, "alpha", _readonly(alpha))
        object.__setattr__(self, "beta", _readonly(beta))
        object.__setattr__(self, "theta", _readonly(beta.imag.copy()))
        tau = np.trace(beta, axis1=0, axis2=1)
        # section traces are real whenever the sections are Hermitian
        object.__setattr__(self, "tau", _readonly(tau.real.copy()))

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def alpha_is_real(self) -> bool:
        return float(np.max(np.abs(self.alpha.imag), initial=0.0)) <= 1e-14

    # slicing accessors; the coefficient formulas mix all three
    def section(self, l):
        """Section (beta[j, k, l])_{j,k} with the last index fixed."""
        return self.beta[:, :, l]

    def section_first(self, j):
        """Section (beta[j, k, l])_{k,l} with the first index fixed."""
        return self.beta[j, :, :]

    def section_second(self, k):
        """Section (beta[j, k, l])_{j,l} with the middle index fixed."""
        return self.beta[:, k, :]

    def theta_section(self, l):
        return self.theta[:, :, l]

    def theta_first(self, j):
        return self.theta[j, :, :]

    @cached_property
    def gamma_squared(self) -> float:
        """Squared radius of the ball confining the mean vector."""
        return float(np.trace(self.alpha).real + 0.25 * self.tau @ self.tau)

    @property
    def gamma(self) -> float:
        """Radius of the mean-confinement ball; invariant under shifts.

        Raises
        ------
        InadmissibleConstantsError
            If the radicand is negative, in which case no quantum state is
            compatible with the constants.
        """
        g2 = self.gamma_squared
        scale = 1.0 + abs(float(np.trace(self.alpha).real))
        if g2 < -1e-12 * scale:
            raise InadmissibleConstantsError(
                f"trace(alpha) + |tau|^2/4 = {g2:.3e} < 0: no state exists"
            )
        return float(np.sqrt(max(g2, 0.0)))

    def dot(self, u):
        """Matrix ``sum_l beta[:, :, l] u_l``."""
        return dot_product(self.beta, u)

    def diamond(self, u):
        """Matrix with columns ``beta[:, :, l] @ u``."""
        return diamond_product(self.beta, u)


def dot_product(arr, u):
    """Contract a 3-index array against a vector over the last index.

    ``dot_product(beta, u)[j, k] = sum_l beta[j, k, l] u_l``.
    """
    arr = np.asarray(arr)
    u = np.asarray(u)
    if u.shape != (arr.shape[2],):
        raise DimensionError(f"vector of length {arr.shape[2]} expected, got {u.shape}")
    return arr @ u


def diamond_product(arr, u):
    """Contract a 3-index array against a vector over the middle index.

    ``diamond_product(beta, u)[j, l] = sum_k beta[j, k, l] u_k``, i.e. the
    matrix whose l-th column is ``beta[:, :, l] @ u``.  The two products are
    linked by the exchange identity
    ``dot_product(b, u) @ v == diamond_product(b, v) @ u`` for all u, v.
    """
    arr = np.asarray(arr)
    u = np.asarray(u)
    if u.shape != (arr.shape[1],):
        raise DimensionError(f"vector of length {arr.shape[1]} expected, got {u.shape}")
    return np.einsum("jkl,k->jl", arr, u)


@dataclass(frozen=True)
class ValidationReport:
    """Residuals of the algebraic consistency checks.

    ``residuals`` maps each check name to its max absolute residual;
    ``violations`` lists the (name, residual) pairs above tolerance.
    """

    residuals: dict
    tol: float

    @property
    def violations(self):
        return [(k, v) for k, v in self.residuals.items() if v > self.tol]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "all constraints satisfied"
        return "; ".join(f"{k}: {v:.3e}" for k, v in self.violations)


def _assoc_constant_residual(alpha, beta):
    # identity-coefficient part of associativity of triple products
    return np.einsum("ls,jkl->jks", alpha, beta) - np.einsum("jl,ksl->jks", alpha, beta)


def _assoc_linear_residual(alpha, beta):
    # variable-coefficient part of associativity of triple products
    n = alpha.shape[0]
    eye = np.eye(n)
    t = np.einsum("jk,rs->jksr", alpha, eye) - np.einsum("ks,rj->jksr", alpha, eye)
    t = t + np.einsum("jkl,lsr->jksr", beta, beta)
    t = t - np.einsum("ksl,jlr->jksr", beta, beta)
    return t


def validate(sc: StructureConstants, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check Hermitianity and associativity of the structure constants.

    Four residuals are computed: Hermitianity of ``alpha``, Hermitianity of
    the sections ``beta[:, :, l]``, and the two associativity constraints
    (one for the identity coefficient and one, quadratic in beta, for the
    variable coefficients).  The report is empty iff all residuals are at
    or below ``tol``.
    """
    a, b = sc.alpha, sc.beta
    res_alpha = float(np.max(np.abs(a - a.conj().T), initial=0.0))
    res_sect = float(np.max(np.abs(b - b.conj().transpose(1, 0, 2)), initial=0.0))
    res_c1 = float(np.max(np.abs(_assoc_constant_residual(a, b)), initial=0.0))
    res_c2 = float(np.max(np.abs(_assoc_linear_residual(a, b)), initial=0.0))
    residuals = dict(
        zip(CHECK_NAMES, (res_alpha, res_sect, res_c1, res_c2))
    )
    return ValidationReport(residuals=residuals, tol=float(tol))


@dataclass(frozen=True)
class OperatorVectorAffine:
    """Affine operator vector ``constant * I + linear @ X``.

    ``constant`` has shape (k,) and ``linear`` shape (k, n); most reductions
    produce the scalar case k = 1, for which :attr:`c0` and :attr:`coeffs`
    give the constant and the coefficient row directly.
    """

    constant: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.constant, dtype=complex))
        m = np.asarray(self.linear, dtype=complex)
        if m.ndim == 1:
            m = m[None, :]
        if m.shape[0] != c.shape[0]:
            raise DimensionError("constant and linear parts disagree in length")
        object.__setattr__(self, "constant", _readonly(c))
        object.__setattr__(self, "linear", _readonly(m))

    @property
    def n(self) -> int:
        return self.linear.shape[1]

    @property
    def c0(self) -> complex:
        if self.constant.shape != (1,):
            raise DimensionError("c0 is defined for scalar forms only")
        return complex(self.constant[0])

    @property
    def coeffs(self) -> np.ndarray:
        if self.linear.shape[0] != 1:
            raise DimensionError("coeffs is defined for scalar forms only")
        return self.linear[0]

    def expectation(self, mu):
        """Value of the form on a state with mean vector ``mu``."""
        return self.constant + self.linear @ np.asarray(mu)


def reduce_quadratic(sc: StructureConstants, R) -> OperatorVectorAffine:
    """Reduce the quadratic form X^T R X to an affine function of X.

    For a real symmetric weighting matrix R the quadratic form equals
    ``<R, alpha>_F * I + sum_l <R, beta_l>_F X_l`` with Frobenius inner
    products, both of which are real for Hermitian sections.
    """
    R = np.asarray(R, dtype=float)
    n = sc.n
    if R.shape != (n, n):
        raise DimensionError(f"R must be {n}x{n}, got {R.shape}")
    if np.max(np.abs(R - R.T), initial=0.0) > 1e-12 * (1.0 + np.max(np.abs(R), initial=0.0)):
        raise DimensionError("R must be symmetric")
    c0 = np.einsum("jk,jk->", R, sc.alpha)
    coeffs = np.einsum("jk,jkl->l", R, sc.beta)
    return OperatorVectorAffine(np.array([c0]), coeffs[None, :])


def norm_bound(sc: StructureConstants) -> np.ndarray:
    """Upper bounds ``|tau_k|/2 + gamma`` on the operator norms of the X_k."""
    g = sc.gamma  # raises on inadmissible constants
    return 0.5 * np.abs(sc.tau) + g


def shift_constants(sc: StructureConstants, phi) -> StructureConstants:
    """Structure constants of the translated variables X + phi.

    The shift maps ``alpha -> alpha - beta.phi - phi phi^T`` and adds
    ``phi_k delta_{jl} + phi_j delta_{kl}`` to ``beta[j, k, l]``; the trace
    vector moves by ``2 phi`` while :attr:`StructureConstants.gamma` is
    invariant.  Shifting by ``phi`` then ``-phi`` is the identity.

    Note the shifted ``alpha`` generally acquires an antisymmetric imaginary
    part ``-theta . phi`` even when the input alpha is real.
    """
    phi = np.asarray(phi, dtype=float)
    n = sc.n
    if phi.shape != (n,):
        raise DimensionError(f"phi must have length {n}")
    eye = np.eye(n)
    alpha_new = sc.alpha - sc.dot(phi) - np.outer(phi, phi)
    beta_new = (
        sc.beta
        + np.einsum("k,jl->jkl", phi, eye)
        + np.einsum("j,kl->jkl", phi, eye)
    )
    return StructureConstants(alpha_new, beta_new)


def ccr_matrix(sc: StructureConstants, x) -> np.ndarray:
    """Commutation matrix ``2i * (theta . x)`` of the variables at mean point x.

    Requires real ``alpha`` (otherwise the commutators carry an additional
    constant term and this reduced form does not apply).
    """
    if not sc.alpha_is_real:
        raise DimensionError("ccr_matrix requires real alpha")
    x = np.asarray(x, dtype=float)
    return 2j * dot_product(sc.theta.astype(complex), x.astype(complex))


def levi_civita() -> np.ndarray:
    """The rank-3 alternating array on three indices."""
    e = np.zeros((3, 3, 3))
    e[0, 1, 2] = e[1, 2, 0] = e[2, 0, 1] = 1.0
    e[1, 0, 2] = e[2, 1, 0] = e[0, 2, 1] = -1.0
    return e


def pauli_preset() -> StructureConstants:
    """Structure constants of the Pauli matrices: alpha = I_3, beta = i*eps."""
    return StructureConstants(np.eye(3), 1j * levi_civita())
