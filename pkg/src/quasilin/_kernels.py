"""Fixed-step RK4 trajectory kernels with numba acceleration.

The moment and error-covariance trajectories reduce to sequential RK4 sweeps
of small dense matrix ODEs; at typical sizes (n = 3..8, thousands of steps)
the cost is pure Python overhead, which numba removes.  Every kernel ships
in two interchangeable implementations:

* the ``_*_loops`` bodies compiled with ``@njit`` (default), and
* a pure numpy path (the same loop bodies interpreted, with the batched
  gain kernel additionally vectorized over trajectories).

Set the environment variable ``QUASILIN_DISABLE_NUMBA=1`` before import to
select the numpy path, e.g. when numba is unavailable or for debugging.
``benchmarks/bench_kernels.py`` times one path against the other.

Time-dependent inputs are pre-sampled on the half grid: for a grid
``t_0 < ... < t_K`` the arrays indexed by ``i = 0 .. 2K`` hold values at
``t_0, t_0 + h_0/2, t_1, t_1 + h_1/2, ..., t_K``, which is exactly what the
RK4 stages consume.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get(
    "QUASILIN_DISABLE_NUMBA", ""
).strip().lower() not in ("1", "true", "yes")


def _lyap_rk4_loops(a, v_half, cov0, hs):
    # Hermitian matrix ODE  c' = a c + c a^T + v(t),  complex dtype.
    nsteps = hs.shape[0]
    n = a.shape[0]
    out = np.empty((nsteps + 1, n, n), np.complex128)
    at = a.T.copy()
    c = cov0.copy()
    out[0] = c
    for k in range(nsteps):
        h = hs[k]
        k1 = a @ c + c @ at + v_half[2 * k]
        y = c + (0.5 * h) * k1
        k2 = a @ y + y @ at + v_half[2 * k + 1]
        y = c + (0.5 * h) * k2
        k3 = a @ y + y @ at + v_half[2 * k + 1]
        y = c + h * k3
        k4 = a @ y + y @ at + v_half[2 * k + 2]
        c = c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        c = 0.5 * (c + c.conj().T)  # suppress Hermitianity drift
        out[k + 1] = c
    return out


def _riccati_rk4_loops(a, sig_half, bmu_half, cmat, dmat, finv, p0, hs):
    # p' = a p + p a^T + sig(t) - s finv s^T,  s = p c^T + b(mu(t)) d^T;
    # the optimal gain s @ finv is recorded at the grid points.
    nsteps = hs.shape[0]
    n = a.shape[0]
    r = cmat.shape[0]
    ps = np.empty((nsteps + 1, n, n), np.float64)
    ks = np.empty((nsteps + 1, n, r), np.float64)
    at = a.T.copy()
    ct = cmat.T.copy()
    dt = dmat.T.copy()
    p = p0.copy()
    ps[0] = p
    ks[0] = (p @ ct + bmu_half[0] @ dt) @ finv
    for k in range(nsteps):
        h = hs[k]
        s = p @ ct + bmu_half[2 * k] @ dt
        k1 = a @ p + p @ at + sig_half[2 * k] - (s @ finv) @ s.T
        y = p + (0.5 * h) * k1
        s = y @ ct + bmu_half[2 * k + 1] @ dt
        k2 = a @ y + y @ at + sig_half[2 * k + 1] - (s @ finv) @ s.T
        y = p + (0.5 * h) * k2
        s = y @ ct + bmu_half[2 * k + 1] @ dt
        k3 = a @ y + y @ at + sig_half[2 * k + 1] - (s @ finv) @ s.T
        y = p + h * k3
        s = y @ ct + bmu_half[2 * k + 2] @ dt
        k4 = a @ y + y @ at + sig_half[2 * k + 2] - (s @ finv) @ s.T
        p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        p = 0.5 * (p + p.T)
        ps[k + 1] = p
        ks[k + 1] = (p @ ct + bmu_half[2 * k + 2] @ dt) @ finv
    return ps, ks


def _gain_lyap_rk4_loops(a, sig_half, bmu_half, cmat, dmat, fmat, k_half, p0, hs):
    # p' = (a - k c) p + p (a - k c)^T + sig(t) - k d b(t)^T - b(t) d^T k^T
    #      + k f k^T,  batched over the leading axis of k_half / p0.
    ngains = k_half.shape[0]
    nsteps = hs.shape[0]
    n = a.shape[0]
    out = np.empty((ngains, nsteps + 1, n, n), np.float64)
    at = a.T.copy()
    for g in range(ngains):
        p = p0[g].copy()
        out[g, 0] = p
        for k in range(nsteps):
            h = hs[k]
            kg = k_half[g, 2 * k]
            kc = kg @ cmat
            kdb = (kg @ dmat) @ bmu_half[2 * k].T
            kfk = (kg @ fmat) @ kg.T
            k1 = (
                a @ p + p @ at - kc @ p - p @ kc.T
                + sig_half[2 * k] - kdb - kdb.T + kfk
            )
            y = p + (0.5 * h) * k1
            kg = k_half[g, 2 * k + 1]
            kc = kg @ cmat
            kdb = (kg @ dmat) @ bmu_half[2 * k + 1].T
            kfk = (kg @ fmat) @ kg.T
            k2 = (
                a @ y + y @ at - kc @ y - y @ kc.T
                + sig_half[2 * k + 1] - kdb - kdb.T + kfk
            )
            y = p + (0.5 * h) * k2
            k3 = (
                a @ y + y @ at - kc @ y - y @ kc.T
                + sig_half[2 * k + 1] - kdb - kdb.T + kfk
            )
            y = p + h * k3
            kg = k_half[g, 2 * k + 2]
            kc = kg @ cmat
            kdb = (kg @ dmat) @ bmu_half[2 * k + 2].T
            kfk = (kg @ fmat) @ kg.T
            k4 = (
                a @ y + y @ at - kc @ y - y @ kc.T
                + sig_half[2 * k + 2] - kdb - kdb.T + kfk
            )
            p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            p = 0.5 * (p + p.T)
            out[g, k + 1] = p
    return out


def _gain_lyap_rk4_numpy(a, sig_half, bmu_half, cmat, dmat, fmat, k_half, p0, hs):
    # Same ODE as _gain_lyap_rk4_loops, vectorized over the gain axis.
    ngains = k_half.shape[0]
    nsteps = hs.shape[0]
    n = a.shape[0]
    out = np.empty((ngains, nsteps + 1, n, n), np.float64)
    p = p0.copy()
    out[:, 0] = p

    def rhs(p, i):
        kg = k_half[:, i]  # (ngains, n, r)
        acl = a[None, :, :] - kg @ cmat
        kdb = (kg @ dmat) @ bmu_half[i].T
        kfk = (kg @ fmat) @ kg.transpose(0, 2, 1)
        return (
            acl @ p
            + p @ acl.transpose(0, 2, 1)
            + sig_half[i][None, :, :]
            - kdb
            - kdb.transpose(0, 2, 1)
            + kfk
        )

    for k in range(nsteps):
        h = hs[k]
        k1 = rhs(p, 2 * k)
        k2 = rhs(p + (0.5 * h) * k1, 2 * k + 1)
        k3 = rhs(p + (0.5 * h) * k2, 2 * k + 1)
        k4 = rhs(p + h * k3, 2 * k + 2)
        p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        p = 0.5 * (p + p.transpose(0, 2, 1))
        out[:, k + 1] = p
    return out


_lyap_rk4_numpy = _lyap_rk4_loops
_riccati_rk4_numpy = _riccati_rk4_loops


def build_numba_kernels():
    """Compile the loop bodies with numba and return the kernel triple."""
    if numba is None:
        raise ImportError("numba is not available")
    jit = numba.njit(cache=True)
    return (
        jit(_lyap_rk4_loops),
        jit(_riccati_rk4_loops),
        jit(_gain_lyap_rk4_loops),
    )


if USE_NUMBA:
    lyap_rk4, riccati_rk4, gain_lyap_rk4 = build_numba_kernels()
else:  # numpy fallback path
    lyap_rk4 = _lyap_rk4_numpy
    riccati_rk4 = _riccati_rk4_numpy
    gain_lyap_rk4 = _gain_lyap_rk4_numpy
