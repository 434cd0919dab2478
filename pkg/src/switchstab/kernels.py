"""Hot numeric kernels for the reduced swing system.

Every kernel has a numba version (explicit loops) and a vectorized numpy
version with identical semantics. The public names dispatch on
``_accel.USE_NUMBA``; both variants stay importable for tests and the
benchmark.

Network coefficients follow the reduced-network convention::

    P_i  = Pm_i - E_i**2 * G_ii
    C_ij = E_i * E_j * B_ij      (zero diagonal)
    D_ij = E_i * E_j * G_ij      (zero diagonal)
"""
import numpy as np

from . import _accel
from ._accel import njit

# gradient-flow termination codes
FLOW_MINIMUM = 0
FLOW_CONVERGED = 1
FLOW_CAP = 2
FLOW_BLOWUP = 3

_RAY_SWITCH = 1e-7


# --------------------------------------------------------------------------
# numba
# --------------------------------------------------------------------------

@njit
def _mismatch_nb(delta, P, C, D, M):
    n = delta.shape[0]
    f = np.empty(n)
    total = 0.0
    mt = 0.0
    for i in range(n):
        acc = P[i]
        for j in range(n):
            if j != i:
                a = delta[i] - delta[j]
                acc -= C[i, j] * np.sin(a) + D[i, j] * np.cos(a)
        f[i] = acc
        total += acc
        mt += M[i]
    for i in range(n):
        f[i] -= M[i] / mt * total
    return f


@njit
def _swing_deriv_nb(delta, omega, P, C, D, M, lam):
    f = _mismatch_nb(delta, P, C, D, M)
    dw = np.empty_like(omega)
    for i in range(delta.shape[0]):
        dw[i] = f[i] / M[i] - lam * omega[i]
    return omega.copy(), dw


@njit
def _rk4_swing_nb(delta0, omega0, P, C, D, M, lam, dt, nsteps):
    n = delta0.shape[0]
    deltas = np.empty((nsteps + 1, n))
    omegas = np.empty((nsteps + 1, n))
    deltas[0] = delta0
    omegas[0] = omega0
    d = delta0.copy()
    w = omega0.copy()
    for k in range(nsteps):
        k1d, k1w = _swing_deriv_nb(d, w, P, C, D, M, lam)
        k2d, k2w = _swing_deriv_nb(d + 0.5 * dt * k1d, w + 0.5 * dt * k1w, P, C, D, M, lam)
        k3d, k3w = _swing_deriv_nb(d + 0.5 * dt * k2d, w + 0.5 * dt * k2w, P, C, D, M, lam)
        k4d, k4w = _swing_deriv_nb(d + dt * k3d, w + dt * k3w, P, C, D, M, lam)
        d = d + dt / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        w = w + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        ok = True
        for i in range(n):
            if not (np.isfinite(d[i]) and np.isfinite(w[i])):
                ok = False
        if not ok:
            return deltas[: k + 1], omegas[: k + 1], k
        deltas[k + 1] = d
        omegas[k + 1] = w
    return deltas, omegas, nsteps


@njit
def _potential_energy_nb(delta, sep, P, C, D):
    n = delta.shape[0]
    pe = 0.0
    for i in range(n):
        pe -= P[i] * (delta[i] - sep[i])
    for i in range(n):
        for j in range(i + 1, n):
            a = delta[i] - delta[j]
            a0 = sep[i] - sep[j]
            pe -= C[i, j] * (np.cos(a) - np.cos(a0))
            if D[i, j] != 0.0:
                dd = a - a0
                sm = (delta[i] - sep[i]) + (delta[j] - sep[j])
                if abs(dd) < _RAY_SWITCH:
                    ray = np.cos(a0) * sm
                else:
                    ray = (np.sin(a) - np.sin(a0)) * sm / dd
                pe += D[i, j] * ray
    return pe


@njit
def _potential_energy_series_nb(deltas, sep, P, C, D):
    out = np.empty(deltas.shape[0])
    for k in range(deltas.shape[0]):
        out[k] = _potential_energy_nb(deltas[k], sep, P, C, D)
    return out


@njit
def _coi_shift_nb(delta, M):
    s = 0.0
    mt = 0.0
    for i in range(delta.shape[0]):
        s += M[i] * delta[i]
        mt += M[i]
    return delta - s / mt


@njit
def _gradient_flow_nb(delta0, P, C, D, M, dt, nmax, conv_tol):
    norms = np.empty(nmax + 1)
    prev = _coi_shift_nb(delta0.copy(), M)
    f = _mismatch_nb(prev, P, C, D, M)
    norms[0] = np.sqrt(np.sum(f * f))
    if norms[0] < conv_tol:
        return FLOW_CONVERGED, 0, prev, norms[:1]
    cur = prev.copy()
    for k in range(1, nmax + 1):
        k1 = _mismatch_nb(cur, P, C, D, M)
        k2 = _mismatch_nb(cur + 0.5 * dt * k1, P, C, D, M)
        k3 = _mismatch_nb(cur + 0.5 * dt * k2, P, C, D, M)
        k4 = _mismatch_nb(cur + dt * k3, P, C, D, M)
        nxt = _coi_shift_nb(cur + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), M)
        f = _mismatch_nb(nxt, P, C, D, M)
        norms[k] = np.sqrt(np.sum(f * f))
        if not np.isfinite(norms[k]):
            return FLOW_BLOWUP, k - 1, cur, norms[:k]
        if norms[k] < conv_tol:
            return FLOW_CONVERGED, k, nxt, norms[: k + 1]
        if k == 1 and norms[1] > norms[0]:
            return FLOW_MINIMUM, 0, cur, norms[:2]
        if k >= 2 and norms[k - 1] <= norms[k - 2] and norms[k - 1] < norms[k]:
            return FLOW_MINIMUM, k - 1, cur, norms[: k + 1]
        cur = nxt
    return FLOW_CAP, nmax, cur, norms


# --------------------------------------------------------------------------
# numpy
# --------------------------------------------------------------------------

def _mismatch_np(delta, P, C, D, M):
    a = delta[:, None] - delta[None, :]
    g = P - (C * np.sin(a) + D * np.cos(a)).sum(axis=1)
    return g - M / M.sum() * g.sum()


def _rk4_swing_np(delta0, omega0, P, C, D, M, lam, dt, nsteps):
    n = delta0.shape[0]
    deltas = np.empty((nsteps + 1, n))
    omegas = np.empty((nsteps + 1, n))
    deltas[0] = delta0
    omegas[0] = omega0
    d = np.array(delta0, dtype=float)
    w = np.array(omega0, dtype=float)

    def deriv(d, w):
        return w, _mismatch_np(d, P, C, D, M) / M - lam * w

    for k in range(nsteps):
        k1d, k1w = deriv(d, w)
        k2d, k2w = deriv(d + 0.5 * dt * k1d, w + 0.5 * dt * k1w)
        k3d, k3w = deriv(d + 0.5 * dt * k2d, w + 0.5 * dt * k2w)
        k4d, k4w = deriv(d + dt * k3d, w + dt * k3w)
        d = d + dt / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        w = w + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        if not (np.isfinite(d).all() and np.isfinite(w).all()):
            return deltas[: k + 1], omegas[: k + 1], k
        deltas[k + 1] = d
        omegas[k + 1] = w
    return deltas, omegas, nsteps


def _potential_energy_series_np(deltas, sep, P, C, D):
    deltas = np.atleast_2d(deltas)
    iu, ju = np.triu_indices(deltas.shape[1], k=1)
    a = deltas[:, iu] - deltas[:, ju]
    a0 = sep[iu] - sep[ju]
    dd = a - a0
    sm = (deltas[:, iu] - sep[iu]) + (deltas[:, ju] - sep[ju])
    near = np.abs(dd) < _RAY_SWITCH
    safe = np.where(near, 1.0, dd)
    ray = np.where(near, np.cos(a0) * sm, (np.sin(a) - np.sin(a0)) * sm / safe)
    pe = -(deltas - sep) @ P
    pe -= (C[iu, ju] * (np.cos(a) - np.cos(a0))).sum(axis=1)
    pe += (D[iu, ju] * ray).sum(axis=1)
    return pe


def _potential_energy_np(delta, sep, P, C, D):
    return float(_potential_energy_series_np(delta[None, :], sep, P, C, D)[0])


def _gradient_flow_np(delta0, P, C, D, M, dt, nmax, conv_tol):
    norms = np.empty(nmax + 1)
    shift = lambda d: d - (M @ d) / M.sum()
    cur = shift(np.array(delta0, dtype=float))
    norms[0] = np.linalg.norm(_mismatch_np(cur, P, C, D, M))
    if norms[0] < conv_tol:
        return FLOW_CONVERGED, 0, cur, norms[:1]
    for k in range(1, nmax + 1):
        k1 = _mismatch_np(cur, P, C, D, M)
        k2 = _mismatch_np(cur + 0.5 * dt * k1, P, C, D, M)
        k3 = _mismatch_np(cur + 0.5 * dt * k2, P, C, D, M)
        k4 = _mismatch_np(cur + dt * k3, P, C, D, M)
        nxt = shift(cur + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        norms[k] = np.linalg.norm(_mismatch_np(nxt, P, C, D, M))
        if not np.isfinite(norms[k]):
            return FLOW_BLOWUP, k - 1, cur, norms[:k]
        if norms[k] < conv_tol:
            return FLOW_CONVERGED, k, nxt, norms[: k + 1]
        if k == 1 and norms[1] > norms[0]:
            return FLOW_MINIMUM, 0, cur, norms[:2]
        if k >= 2 and norms[k - 1] <= norms[k - 2] and norms[k - 1] < norms[k]:
            return FLOW_MINIMUM, k - 1, cur, norms[: k + 1]
        cur = nxt
    return FLOW_CAP, nmax, cur, norms


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

class _Backend:
    def __init__(self, name, mismatch, rk4_swing, potential_energy, potential_energy_series, gradient_flow):
        self.name = name
        self.mismatch = mismatch
        self.rk4_swing = rk4_swing
        self.potential_energy = potential_energy
        self.potential_energy_series = potential_energy_series
        self.gradient_flow = gradient_flow


numpy_backend = _Backend(
    "numpy", _mismatch_np, _rk4_swing_np, _potential_energy_np,
    _potential_energy_series_np, _gradient_flow_np,
)
numba_backend = _Backend(
    "numba", _mismatch_nb, _rk4_swing_nb, _potential_energy_nb,
    _potential_energy_series_nb, _gradient_flow_nb,
) if _accel.HAVE_NUMBA else None


def backend():
    return numba_backend if _accel.USE_NUMBA else numpy_backend


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def mismatch(delta, P, C, D, M):
    """COI-projected accelerating power f(delta); zero exactly at equilibria."""
    return backend().mismatch(_f64(delta), _f64(P), _f64(C), _f64(D), _f64(M))


def rk4_swing(delta0, omega0, P, C, D, M, lam, dt, nsteps):
    """Fixed-step RK4 of the COI swing system.

    Returns ``(deltas, omegas, steps_done)``; ``steps_done < nsteps`` means a
    non-finite state appeared after that many completed steps.
    """
    return backend().rk4_swing(
        _f64(delta0), _f64(omega0), _f64(P), _f64(C), _f64(D), _f64(M),
        float(lam), float(dt), int(nsteps),
    )


def potential_energy(delta, sep, P, C, D):
    return float(backend().potential_energy(_f64(delta), _f64(sep), _f64(P), _f64(C), _f64(D)))


def potential_energy_series(deltas, sep, P, C, D):
    return backend().potential_energy_series(_f64(np.atleast_2d(deltas)), _f64(sep), _f64(P), _f64(C), _f64(D))


def gradient_flow(delta0, P, C, D, M, dt, nmax, conv_tol):
    """Integrate d(delta)/dt = f(delta) until the first local minimum of ||f||_2.

    Returns ``(status, index, delta_at_index, norms)``.
    """
    return backend().gradient_flow(
        _f64(delta0), _f64(P), _f64(C), _f64(D), _f64(M), float(dt), int(nmax), float(conv_tol),
    )
