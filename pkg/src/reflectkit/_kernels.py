"""Hot numeric kernels: per-cell transfer-matrix propagation of -y'' + q y = w^2 y.

Each branch potential is treated as piecewise constant over the sample
cells, so one cell is advanced with the exact constant-potential
propagator (trig / hyperbolic / series branch depending on the sign and
size of k^2 = w^2 - q_cell).  Propagation runs from the far end of the
branch (x = tau) down to the node (x = 0).

Two implementations are provided: numba-jitted loops (default) and a
pure-numpy path vectorised over the frequency axis.  Set the environment
variable ``REFLECTKIT_NO_NUMBA=1`` to force the numpy path; it is also
used automatically when numba is not importable.
"""

import os

import numpy as np

_SERIES_CUTOFF = 1e-12


def _want_numba():
    flag = os.environ.get("REFLECTKIT_NO_NUMBA", "")
    return flag.strip().lower() not in ("1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# pure-numpy implementations (vectorised over omega)
# ---------------------------------------------------------------------------

def _cell_coeffs_np(k2, delta):
    """Return (c, s) with c=cos(k d), s=sin(k d)/k continued through k^2<=0."""
    a = k2 * (delta * delta)
    c = np.empty_like(k2)
    s = np.empty_like(k2)
    small = np.abs(a) < _SERIES_CUTOFF
    pos = (~small) & (k2 > 0.0)
    neg = (~small) & (k2 < 0.0)
    if np.any(small):
        asm = a[small]
        c[small] = 1.0 - 0.5 * asm
        s[small] = delta * (1.0 - asm / 6.0)
    if np.any(pos):
        k = np.sqrt(k2[pos])
        kd = k * delta
        c[pos] = np.cos(kd)
        s[pos] = np.sin(kd) / k
    if np.any(neg):
        kap = np.sqrt(-k2[neg])
        kd = kap * delta
        c[neg] = np.cosh(kd)
        s[neg] = np.sinh(kd) / kap
    return c, s


def propagate_endpoints_np(q_cells, dx, omegas, v0, w0):
    """Propagate (y, y') from x=tau to x=0; returns node values and derivatives."""
    m = omegas.shape[0]
    v = np.full(m, v0, dtype=np.float64)
    w = np.full(m, w0, dtype=np.float64)
    om2 = omegas * omegas
    for i in range(q_cells.shape[0] - 1, -1, -1):
        k2 = om2 - q_cells[i]
        c, s = _cell_coeffs_np(k2, dx)
        v, w = c * v - s * w, k2 * s * v + c * w
    return v, w


def propagate_joint_np(q_cells, dx, omegas):
    """Propagate Neumann and Dirichlet pairs together.

    Returns (vN, wN, vD, wD, wron_drift) where wron_drift is the max over
    cell boundaries of |vN*wD - vD*wN - 1| per frequency.
    """
    m = omegas.shape[0]
    vn = np.ones(m)
    wn = np.zeros(m)
    vd = np.zeros(m)
    wd = np.ones(m)
    drift = np.zeros(m)
    om2 = omegas * omegas
    for i in range(q_cells.shape[0] - 1, -1, -1):
        k2 = om2 - q_cells[i]
        c, s = _cell_coeffs_np(k2, dx)
        vn, wn = c * vn - s * wn, k2 * s * vn + c * wn
        vd, wd = c * vd - s * wd, k2 * s * vd + c * wd
        np.maximum(drift, np.abs(vn * wd - vd * wn - 1.0), out=drift)
    return vn, wn, vd, wd, drift


def propagate_trace_np(q_cells, dx, omegas, v0, w0):
    """Propagate and record y at every grid node.

    Returns (values, v_at_0, w_at_0) with values of shape
    (len(omegas), n_cells + 1); column j holds y(x_j).
    """
    nc = q_cells.shape[0]
    m = omegas.shape[0]
    values = np.empty((m, nc + 1))
    values[:, nc] = v0
    v = np.full(m, float(v0))
    w = np.full(m, float(w0))
    om2 = omegas * omegas
    for i in range(nc - 1, -1, -1):
        k2 = om2 - q_cells[i]
        c, s = _cell_coeffs_np(k2, dx)
        v, w = c * v - s * w, k2 * s * v + c * w
        values[:, i] = v
    return values, v, w


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

_HAVE_NUMBA = False
if _want_numba():
    try:
        import numba
        from numba import njit, prange

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - depends on environment
        _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _cell_coeffs_nb(k2, delta):
        a = k2 * delta * delta
        if abs(a) < _SERIES_CUTOFF:
            return 1.0 - 0.5 * a, delta * (1.0 - a / 6.0)
        if k2 > 0.0:
            k = np.sqrt(k2)
            return np.cos(k * delta), np.sin(k * delta) / k
        kap = np.sqrt(-k2)
        return np.cosh(kap * delta), np.sinh(kap * delta) / kap

    @njit(cache=True, parallel=True)
    def propagate_endpoints_nb(q_cells, dx, omegas, v0, w0):
        m = omegas.shape[0]
        nc = q_cells.shape[0]
        vout = np.empty(m)
        wout = np.empty(m)
        for j in prange(m):
            om2 = omegas[j] * omegas[j]
            v = v0
            w = w0
            for i in range(nc - 1, -1, -1):
                k2 = om2 - q_cells[i]
                c, s = _cell_coeffs_nb(k2, dx)
                v, w = c * v - s * w, k2 * s * v + c * w
            vout[j] = v
            wout[j] = w
        return vout, wout

    @njit(cache=True, parallel=True)
    def propagate_joint_nb(q_cells, dx, omegas):
        m = omegas.shape[0]
        nc = q_cells.shape[0]
        vn_o = np.empty(m)
        wn_o = np.empty(m)
        vd_o = np.empty(m)
        wd_o = np.empty(m)
        drift = np.empty(m)
        for j in prange(m):
            om2 = omegas[j] * omegas[j]
            vn, wn = 1.0, 0.0
            vd, wd = 0.0, 1.0
            dmax = 0.0
            for i in range(nc - 1, -1, -1):
                k2 = om2 - q_cells[i]
                c, s = _cell_coeffs_nb(k2, dx)
                vn, wn = c * vn - s * wn, k2 * s * vn + c * wn
                vd, wd = c * vd - s * wd, k2 * s * vd + c * wd
                d = abs(vn * wd - vd * wn - 1.0)
                if d > dmax:
                    dmax = d
            vn_o[j] = vn
            wn_o[j] = wn
            vd_o[j] = vd
            wd_o[j] = wd
            drift[j] = dmax
        return vn_o, wn_o, vd_o, wd_o, drift

    @njit(cache=True, parallel=True)
    def propagate_trace_nb(q_cells, dx, omegas, v0, w0):
        m = omegas.shape[0]
        nc = q_cells.shape[0]
        values = np.empty((m, nc + 1))
        vout = np.empty(m)
        wout = np.empty(m)
        for j in prange(m):
            om2 = omegas[j] * omegas[j]
            v = v0
            w = w0
            values[j, nc] = v0
            for i in range(nc - 1, -1, -1):
                k2 = om2 - q_cells[i]
                c, s = _cell_coeffs_nb(k2, dx)
                v, w = c * v - s * w, k2 * s * v + c * w
                values[j, i] = v
            vout[j] = v
            wout[j] = w
        return values, vout, wout

    propagate_endpoints = propagate_endpoints_nb
    propagate_joint = propagate_joint_nb
    propagate_trace = propagate_trace_nb
else:
    propagate_endpoints = propagate_endpoints_np
    propagate_joint = propagate_joint_np
    propagate_trace = propagate_trace_np

USING_NUMBA = _HAVE_NUMBA
