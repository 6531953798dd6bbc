# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels for the built-in models.

Every function here has a twin with the same signature in ``_pycore``;
``stepwise.kernels`` picks one at import.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, isfinite, fmin, fmax, NAN

cnp.import_array()

DEF MAXDIM = 8

# keep in sync with _pycore.MODEL_*
cdef enum:
    INTRO = 0
    CHEMO = 1
    DSDI = 2

cdef double LN_FLOOR = 1e-12

BACKEND = "cython"


cdef inline void rhs(int model, const double* p, const double* x,
                     const double* u, double t, double* out) noexcept nogil:
    cdef double N, P, L1, L2, G1, G2
    if model == INTRO:
        out[0] = x[0] + u[0]
    elif model == CHEMO:
        N = x[0]
        out[0] = p[0] * N * log(1.0 / fmax(N, LN_FLOOR)) - u[0] * p[3] * N
    else:
        P = p[8] * x[2] + p[9] * x[3]
        L1 = p[10] * p[4] * P
        L2 = p[10] * p[5] * P
        G1 = L1 * x[0] * (1.0 - u[0])
        G2 = L2 * x[1] * (1.0 - u[1])
        out[0] = p[1] * (p[2] * p[0] - x[0]) - G1
        out[1] = p[1] * (p[3] * p[0] - x[1]) - G2
        out[2] = p[11] * G1 + p[13] * G2 - (p[1] + p[6] + u[2]) * x[2]
        out[3] = p[12] * G1 + p[14] * G2 - (p[1] + p[7] + u[3]) * x[3]
        out[4] = (p[6] + u[2]) * x[2] + (p[7] + u[3]) * x[3] - (p[1] + p[15]) * x[4]


cdef inline double running(int model, const double* p, const double* x,
                           const double* u, double t) noexcept nogil:
    cdef double e
    if model == INTRO:
        return 2.0 * x[0] - 3.0 * u[0] - u[0] * u[0]
    elif model == CHEMO:
        e = x[0] - p[4]
        return p[1] * e * e + p[2] * u[0] * u[0]
    else:
        return (p[16] * x[2] * x[2] + p[17] * x[3] * x[3]
                + p[18] * u[0] * u[0] + p[19] * u[1] * u[1]
                + p[20] * u[2] * u[2] + p[21] * u[3] * u[3])


cdef inline void adjoint_rhs(int model, const double* p, const double* x,
                             const double* lam, const double* u, double t,
                             double* out) noexcept nogil:
    # out = -dH/dx with H = L + lam . f
    cdef double N, P, L1, L2, w1, w2, s
    if model == INTRO:
        out[0] = -(2.0 + lam[0])
    elif model == CHEMO:
        N = fmax(x[0], LN_FLOOR)
        out[0] = -(2.0 * p[1] * (x[0] - p[4])
                   + lam[0] * (p[0] * log(1.0 / N) - p[0] - p[3] * u[0]))
    else:
        P = p[8] * x[2] + p[9] * x[3]
        L1 = p[10] * p[4] * P
        L2 = p[10] * p[5] * P
        w1 = (1.0 - u[0]) * (-lam[0] + p[11] * lam[2] + p[12] * lam[3])
        w2 = (1.0 - u[1]) * (-lam[1] + p[13] * lam[2] + p[14] * lam[3])
        s = p[4] * x[0] * w1 + p[5] * x[1] * w2
        out[0] = p[1] * lam[0] - L1 * w1
        out[1] = p[1] * lam[1] - L2 * w2
        out[2] = -(2.0 * p[16] * x[2] + p[10] * p[8] * s
                   - (p[1] + p[6] + u[2]) * lam[2] + (p[6] + u[2]) * lam[4])
        out[3] = -(2.0 * p[17] * x[3] + p[10] * p[9] * s
                   - (p[1] + p[7] + u[3]) * lam[3] + (p[7] + u[3]) * lam[4])
        out[4] = (p[1] + p[15]) * lam[4]


cdef inline double clampd(double v, double lo, double hi) noexcept nogil:
    return fmin(fmax(v, lo), hi)


cdef inline void characterize(int model, const double* p, const double* x,
                              const double* lam, const double* bnd,
                              double* out) noexcept nogil:
    cdef double P, L1, L2
    if model == INTRO:
        out[0] = clampd(0.5 * (lam[0] - 3.0), bnd[0], bnd[1])
    elif model == CHEMO:
        out[0] = clampd(p[3] * lam[0] * x[0] / (2.0 * p[2]), bnd[0], bnd[1])
    else:
        P = p[8] * x[2] + p[9] * x[3]
        L1 = p[10] * p[4] * P
        L2 = p[10] * p[5] * P
        out[0] = clampd(L1 * x[0] * (p[11] * lam[2] + p[12] * lam[3] - lam[0])
                        / (2.0 * p[18]), bnd[0], bnd[1])
        out[1] = clampd(L2 * x[1] * (p[13] * lam[2] + p[14] * lam[3] - lam[1])
                        / (2.0 * p[19]), bnd[2], bnd[3])
        out[2] = clampd(x[2] * (lam[2] - lam[4]) / (2.0 * p[20]), bnd[4], bnd[5])
        out[3] = clampd(x[3] * (lam[3] - lam[4]) / (2.0 * p[21]), bnd[6], bnd[7])


cdef inline bint rk4_const(int model, const double* p, double* x, int nx,
                           const double* u, double t, double h) noexcept nogil:
    """In-place RK4 step with the control held at ``u``; False if non-finite."""
    cdef double k1[MAXDIM]
    cdef double k2[MAXDIM]
    cdef double k3[MAXDIM]
    cdef double k4[MAXDIM]
    cdef double y[MAXDIM]
    cdef int i
    rhs(model, p, x, u, t, k1)
    for i in range(nx):
        y[i] = x[i] + 0.5 * h * k1[i]
    rhs(model, p, y, u, t + 0.5 * h, k2)
    for i in range(nx):
        y[i] = x[i] + 0.5 * h * k2[i]
    rhs(model, p, y, u, t + 0.5 * h, k3)
    for i in range(nx):
        y[i] = x[i] + h * k3[i]
    rhs(model, p, y, u, t + h, k4)
    for i in range(nx):
        x[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if not isfinite(x[i]):
            return False
    return True


cdef double schedule_cost_c(int model, const double* p, const double* x0,
                            int nx, int m, double T, int nsteps,
                            const double* breaks, int nseg,
                            const double* values, double* fail_t,
                            double* traj_t, double* traj_x, double* traj_u,
                            int* n_nodes) noexcept nogil:
    """Integrate and accumulate the trapezoid cost on the merged grid.

    The merged grid is the uniform grid plus every schedule breakpoint that
    falls strictly inside a step (farther than ``1e-9 h`` from both ends).
    The control is constant on each merged interval. Returns NaN and sets
    ``fail_t`` on divergence. Trajectory buffers are optional (NULL).
    """
    cdef double x[MAXDIM]
    cdef double h = T / nsteps
    cdef double tol = 1e-9 * h
    cdef double a, b, c, d, mid, cost = 0.0, la, lb
    cdef const double* u
    cdef int i, k, j = 0, q = 1, node = 0, jr
    for i in range(nx):
        x[i] = x0[i]
    if traj_t != NULL:
        traj_t[0] = 0.0
        for i in range(nx):
            traj_x[i] = x[i]
    for k in range(nsteps):
        a = k * h
        b = T if k == nsteps - 1 else (k + 1) * h
        while q < nseg and breaks[q] <= a + tol:
            q += 1
        c = a
        while True:
            while q < nseg and breaks[q] <= c:  # repeated breakpoint
                q += 1
            if q < nseg and breaks[q] < b - tol:
                d = breaks[q]
                q += 1
            else:
                d = b
            mid = 0.5 * (c + d)
            while j < nseg - 1 and breaks[j + 1] <= mid:
                j += 1
            u = values + j * m
            la = running(model, p, x, u, c)
            if not rk4_const(model, p, x, nx, u, c, d - c):
                fail_t[0] = c
                return NAN
            lb = running(model, p, x, u, d)
            cost += 0.5 * (d - c) * (la + lb)
            if traj_t != NULL:
                node += 1
                traj_t[node] = d
                for i in range(nx):
                    traj_x[node * nx + i] = x[i]
            c = d
            if d >= b:
                break
    if traj_t != NULL:
        # right-continuous control at every node; last node takes the last
        # non-empty segment
        jr = 0
        for k in range(node + 1):
            if k == node:
                jr = nseg - 1
                while jr > 0 and breaks[jr + 1] == breaks[jr]:
                    jr -= 1
            else:
                while jr < nseg - 1 and breaks[jr + 1] <= traj_t[k]:
                    jr += 1
            for i in range(m):
                traj_u[k * m + i] = values[jr * m + i]
        n_nodes[0] = node + 1
    return cost


class IntegrationDivergedCore(ArithmeticError):
    pass


def _check_dims(int model, int nx, int m):
    if nx > MAXDIM or m > MAXDIM:
        raise ValueError("state/control dimension too large for the kernel")
    if model not in (INTRO, CHEMO, DSDI):
        raise ValueError(f"unknown kernel model {model}")


def schedule_cost(int model, const double[::1] params, const double[::1] x0, double T,
                  int nsteps, const double[::1] breaks, const double[:, ::1] values):
    """Running cost of a piecewise-constant schedule on the merged grid."""
    cdef int nx = x0.shape[0], m = values.shape[1], nseg = values.shape[0]
    cdef double fail_t = 0.0, cost
    cdef double dummy = 0.0
    cdef const double* pp = &params[0] if params.shape[0] > 0 else &dummy
    _check_dims(model, nx, m)
    with nogil:
        cost = schedule_cost_c(model, pp, &x0[0], nx, m, T, nsteps,
                               &breaks[0], nseg, &values[0, 0], &fail_t,
                               NULL, NULL, NULL, NULL)
    if cost != cost:
        raise IntegrationDivergedCore(fail_t)
    return cost


def batch_schedule_cost(int model, const double[::1] params, const double[::1] x0,
                        double T, int nsteps, const double[:, ::1] breaks,
                        const double[:, :, ::1] values):
    """Costs for many schedules sharing a horizon; NaN marks divergence."""
    cdef int nx = x0.shape[0], m = values.shape[2], nseg = values.shape[1]
    cdef Py_ssize_t r, rows = values.shape[0]
    cdef double fail_t = 0.0
    cdef double dummy = 0.0
    cdef const double* pp = &params[0] if params.shape[0] > 0 else &dummy
    out = np.empty(rows)
    cdef double[::1] ov = out
    _check_dims(model, nx, m)
    with nogil:
        for r in range(rows):
            ov[r] = schedule_cost_c(model, pp, &x0[0], nx, m, T, nsteps,
                                    &breaks[r, 0], nseg, &values[r, 0, 0],
                                    &fail_t, NULL, NULL, NULL, NULL)
    return out


def schedule_trajectory(int model, const double[::1] params, const double[::1] x0,
                        double T, int nsteps, const double[::1] breaks,
                        const double[:, ::1] values):
    """Same integration as ``schedule_cost`` but keeps every merged node.

    Returns ``(times, states, controls, cost)``.
    """
    cdef int nx = x0.shape[0], m = values.shape[1], nseg = values.shape[0]
    cdef int cap = nsteps + nseg + 1, n_nodes = 0
    cdef double fail_t = 0.0, cost
    cdef double dummy = 0.0
    cdef const double* pp = &params[0] if params.shape[0] > 0 else &dummy
    _check_dims(model, nx, m)
    tt = np.empty(cap)
    xx = np.empty((cap, nx))
    uu = np.empty((cap, m))
    cdef double[::1] tv = tt
    cdef double[:, ::1] xv = xx
    cdef double[:, ::1] uv = uu
    with nogil:
        cost = schedule_cost_c(model, pp, &x0[0], nx, m, T, nsteps,
                               &breaks[0], nseg, &values[0, 0], &fail_t,
                               &tv[0], &xv[0, 0], &uv[0, 0], &n_nodes)
    if cost != cost:
        raise IntegrationDivergedCore(fail_t)
    return tt[:n_nodes].copy(), xx[:n_nodes].copy(), uu[:n_nodes].copy(), cost


def sweep_forward(int model, const double[::1] params, const double[::1] x0, double T,
                  int nsteps, const double[:, ::1] U):
    """RK4 forward pass with node controls interpolated linearly at half steps."""
    cdef int nx = x0.shape[0], m = U.shape[1], k, i
    cdef double h = T / nsteps, t
    cdef double um[MAXDIM]
    cdef double k1[MAXDIM]
    cdef double k2[MAXDIM]
    cdef double k3[MAXDIM]
    cdef double k4[MAXDIM]
    cdef double y[MAXDIM]
    cdef double dummy = 0.0
    cdef const double* pp = &params[0] if params.shape[0] > 0 else &dummy
    cdef int bad = -1
    _check_dims(model, nx, m)
    X = np.empty((nsteps + 1, nx))
    cdef double[:, ::1] xv = X
    for i in range(nx):
        xv[0, i] = x0[i]
    with nogil:
        for k in range(nsteps):
            t = k * h
            for i in range(m):
                um[i] = 0.5 * (U[k, i] + U[k + 1, i])
            rhs(model, pp, &xv[k, 0], &U[k, 0], t, k1)
            for i in range(nx):
                y[i] = xv[k, i] + 0.5 * h * k1[i]
            rhs(model, pp, y, um, t + 0.5 * h, k2)
            for i in range(nx):
                y[i] = xv[k, i] + 0.5 * h * k2[i]
            rhs(model, pp, y, um, t + 0.5 * h, k3)
            for i in range(nx):
                y[i] = xv[k, i] + h * k3[i]
            rhs(model, pp, y, &U[k + 1, 0], t + h, k4)
            for i in range(nx):
                xv[k + 1, i] = xv[k, i] + h / 6.0 * (
                    k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not isfinite(xv[k + 1, i]):
                    bad = k
            if bad >= 0:
                break
    if bad >= 0:
        raise IntegrationDivergedCore(bad * h)
    return X


def sweep_backward(int model, const double[::1] params, double T, int nsteps,
                   const double[:, ::1] X, const double[:, ::1] U):
    """RK4 backward pass of the adjoint from ``lam(T) = 0``.

    States and controls are interpolated linearly between nodes.
    """
    cdef int nx = X.shape[1], m = U.shape[1], k, i
    cdef double h = T / nsteps, t
    cdef double um[MAXDIM]
    cdef double xm[MAXDIM]
    cdef double k1[MAXDIM]
    cdef double k2[MAXDIM]
    cdef double k3[MAXDIM]
    cdef double k4[MAXDIM]
    cdef double y[MAXDIM]
    cdef double dummy = 0.0
    cdef const double* pp = &params[0] if params.shape[0] > 0 else &dummy
    cdef int bad = -1
    _check_dims(model, nx, m)
    Lam = np.zeros((nsteps + 1, nx))
    cdef double[:, ::1] lv = Lam
    with nogil:
        for k in range(nsteps, 0, -1):
            t = k * h
            for i in range(m):
                um[i] = 0.5 * (U[k, i] + U[k - 1, i])
            for i in range(nx):
                xm[i] = 0.5 * (X[k, i] + X[k - 1, i])
            adjoint_rhs(model, pp, &X[k, 0], &lv[k, 0], &U[k, 0], t, k1)
            for i in range(nx):
                y[i] = lv[k, i] - 0.5 * h * k1[i]
            adjoint_rhs(model, pp, xm, y, um, t - 0.5 * h, k2)
            for i in range(nx):
                y[i] = lv[k, i] - 0.5 * h * k2[i]
            adjoint_rhs(model, pp, xm, y, um, t - 0.5 * h, k3)
            for i in range(nx):
                y[i] = lv[k, i] - h * k3[i]
            adjoint_rhs(model, pp, &X[k - 1, 0], y, &U[k - 1, 0], t - h, k4)
            for i in range(nx):
                lv[k - 1, i] = lv[k, i] - h / 6.0 * (
                    k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not isfinite(lv[k - 1, i]):
                    bad = k
            if bad >= 0:
                break
    if bad >= 0:
        raise IntegrationDivergedCore(bad * h)
    return Lam


def characterize_nodes(int model, const double[::1] params, const double[:, ::1] X,
                       const double[:, ::1] Lam, const double[:, ::1] bounds):
    """Pointwise optimal control from state and adjoint at every node."""
    cdef Py_ssize_t k, n = X.shape[0]
    cdef int m = bounds.shape[0]
    cdef double dummy = 0.0
    cdef const double* pp = &params[0] if params.shape[0] > 0 else &dummy
    _check_dims(model, X.shape[1], m)
    out = np.empty((n, m))
    cdef double[:, ::1] ov = out
    with nogil:
        for k in range(n):
            characterize(model, pp, &X[k, 0], &Lam[k, 0], &bounds[0, 0],
                         &ov[k, 0])
    return out


def node_running_cost(int model, const double[::1] params, double T, int nsteps,
                      const double[:, ::1] X, const double[:, ::1] U):
    """Trapezoid of the running cost over node samples."""
    cdef Py_ssize_t k
    cdef double h = T / nsteps, acc = 0.0, lk
    cdef double dummy = 0.0
    cdef const double* pp = &params[0] if params.shape[0] > 0 else &dummy
    _check_dims(model, X.shape[1], U.shape[1])
    with nogil:
        for k in range(nsteps + 1):
            lk = running(model, pp, &X[k, 0], &U[k, 0], k * h)
            if k == 0 or k == nsteps:
                acc += 0.5 * lk
            else:
                acc += lk
    return h * acc
