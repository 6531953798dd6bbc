"""Pure-Python twin of ``_core``; used when the extension is not built.

Mirrors the compiled kernels statement for statement so both backends
produce the same numbers up to floating-point reassociation.
"""

import math

import numpy as np

BACKEND = "python"

MODEL_INTRO = 0
MODEL_CHEMO = 1
MODEL_DSDI = 2

LN_FLOOR = 1e-12


class IntegrationDivergedCore(ArithmeticError):
    pass


def _rhs(model, p, x, u, t):
    if model == MODEL_INTRO:
        return [x[0] + u[0]]
    if model == MODEL_CHEMO:
        N = x[0]
        return [p[0] * N * math.log(1.0 / max(N, LN_FLOOR)) - u[0] * p[3] * N]
    P = p[8] * x[2] + p[9] * x[3]
    L1 = p[10] * p[4] * P
    L2 = p[10] * p[5] * P
    G1 = L1 * x[0] * (1.0 - u[0])
    G2 = L2 * x[1] * (1.0 - u[1])
    return [
        p[1] * (p[2] * p[0] - x[0]) - G1,
        p[1] * (p[3] * p[0] - x[1]) - G2,
        p[11] * G1 + p[13] * G2 - (p[1] + p[6] + u[2]) * x[2],
        p[12] * G1 + p[14] * G2 - (p[1] + p[7] + u[3]) * x[3],
        (p[6] + u[2]) * x[2] + (p[7] + u[3]) * x[3] - (p[1] + p[15]) * x[4],
    ]


def _running(model, p, x, u, t):
    if model == MODEL_INTRO:
        return 2.0 * x[0] - 3.0 * u[0] - u[0] * u[0]
    if model == MODEL_CHEMO:
        e = x[0] - p[4]
        return p[1] * e * e + p[2] * u[0] * u[0]
    return (p[16] * x[2] * x[2] + p[17] * x[3] * x[3]
            + p[18] * u[0] * u[0] + p[19] * u[1] * u[1]
            + p[20] * u[2] * u[2] + p[21] * u[3] * u[3])


def _adjoint_rhs(model, p, x, lam, u, t):
    if model == MODEL_INTRO:
        return [-(2.0 + lam[0])]
    if model == MODEL_CHEMO:
        N = max(x[0], LN_FLOOR)
        return [-(2.0 * p[1] * (x[0] - p[4])
                  + lam[0] * (p[0] * math.log(1.0 / N) - p[0] - p[3] * u[0]))]
    P = p[8] * x[2] + p[9] * x[3]
    L1 = p[10] * p[4] * P
    L2 = p[10] * p[5] * P
    w1 = (1.0 - u[0]) * (-lam[0] + p[11] * lam[2] + p[12] * lam[3])
    w2 = (1.0 - u[1]) * (-lam[1] + p[13] * lam[2] + p[14] * lam[3])
    s = p[4] * x[0] * w1 + p[5] * x[1] * w2
    return [
        p[1] * lam[0] - L1 * w1,
        p[1] * lam[1] - L2 * w2,
        -(2.0 * p[16] * x[2] + p[10] * p[8] * s
          - (p[1] + p[6] + u[2]) * lam[2] + (p[6] + u[2]) * lam[4]),
        -(2.0 * p[17] * x[3] + p[10] * p[9] * s
          - (p[1] + p[7] + u[3]) * lam[3] + (p[7] + u[3]) * lam[4]),
        (p[1] + p[15]) * lam[4],
    ]


def _clamp(v, lo, hi):
    return min(max(v, lo), hi)


def _characterize(model, p, x, lam, bnd):
    if model == MODEL_INTRO:
        return [_clamp(0.5 * (lam[0] - 3.0), bnd[0][0], bnd[0][1])]
    if model == MODEL_CHEMO:
        return [_clamp(p[3] * lam[0] * x[0] / (2.0 * p[2]), bnd[0][0], bnd[0][1])]
    P = p[8] * x[2] + p[9] * x[3]
    L1 = p[10] * p[4] * P
    L2 = p[10] * p[5] * P
    return [
        _clamp(L1 * x[0] * (p[11] * lam[2] + p[12] * lam[3] - lam[0])
               / (2.0 * p[18]), bnd[0][0], bnd[0][1]),
        _clamp(L2 * x[1] * (p[13] * lam[2] + p[14] * lam[3] - lam[1])
               / (2.0 * p[19]), bnd[1][0], bnd[1][1]),
        _clamp(x[2] * (lam[2] - lam[4]) / (2.0 * p[20]), bnd[2][0], bnd[2][1]),
        _clamp(x[3] * (lam[3] - lam[4]) / (2.0 * p[21]), bnd[3][0], bnd[3][1]),
    ]


def _rk4_const(model, p, x, u, t, h):
    k1 = _rhs(model, p, x, u, t)
    k2 = _rhs(model, p, [a + 0.5 * h * b for a, b in zip(x, k1)], u, t + 0.5 * h)
    k3 = _rhs(model, p, [a + 0.5 * h * b for a, b in zip(x, k2)], u, t + 0.5 * h)
    k4 = _rhs(model, p, [a + h * b for a, b in zip(x, k3)], u, t + h)
    out = [a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
           for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)]
    if not all(math.isfinite(v) for v in out):
        return None
    return out


def _schedule_cost(model, p, x0, T, nsteps, breaks, values, record):
    h = T / nsteps
    tol = 1e-9 * h
    nseg = len(values)
    x = list(x0)
    cost = 0.0
    j = 0
    q = 1
    times = [0.0]
    states = [list(x)]
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
            u = values[j]
            la = _running(model, p, x, u, c)
            nxt = _rk4_const(model, p, x, u, c, d - c)
            if nxt is None:
                raise IntegrationDivergedCore(c)
            x = nxt
            lb = _running(model, p, x, u, d)
            cost += 0.5 * (d - c) * (la + lb)
            if record:
                times.append(d)
                states.append(list(x))
            c = d
            if d >= b:
                break
    if not record:
        return cost, None, None, None
    controls = []
    jr = 0
    last = len(times) - 1
    for k, tk in enumerate(times):
        if k == last:
            jr = nseg - 1
            while jr > 0 and breaks[jr + 1] == breaks[jr]:
                jr -= 1
        else:
            while jr < nseg - 1 and breaks[jr + 1] <= tk:
                jr += 1
        controls.append(values[jr])
    return cost, times, states, controls


def _plain(params, x0, breaks, values):
    return (list(map(float, params)), list(map(float, x0)),
            list(map(float, breaks)),
            [list(map(float, row)) for row in np.asarray(values)])


def schedule_cost(model, params, x0, T, nsteps, breaks, values):
    p, x, b, v = _plain(params, x0, breaks, values)
    return _schedule_cost(model, p, x, float(T), int(nsteps), b, v, False)[0]


def batch_schedule_cost(model, params, x0, T, nsteps, breaks, values):
    out = np.empty(len(values))
    for r in range(len(values)):
        try:
            out[r] = schedule_cost(model, params, x0, T, nsteps, breaks[r],
                                   values[r])
        except IntegrationDivergedCore:
            out[r] = np.nan
    return out


def schedule_trajectory(model, params, x0, T, nsteps, breaks, values):
    p, x, b, v = _plain(params, x0, breaks, values)
    cost, tt, xx, uu = _schedule_cost(model, p, x, float(T), int(nsteps), b, v,
                                      True)
    return np.array(tt), np.array(xx), np.array(uu), cost


def sweep_forward(model, params, x0, T, nsteps, U):
    p = list(map(float, params))
    U = np.asarray(U).tolist()
    h = T / nsteps
    X = [list(map(float, x0))]
    for k in range(nsteps):
        t = k * h
        x = X[k]
        um = [0.5 * (a + b) for a, b in zip(U[k], U[k + 1])]
        k1 = _rhs(model, p, x, U[k], t)
        k2 = _rhs(model, p, [a + 0.5 * h * b for a, b in zip(x, k1)], um, t + 0.5 * h)
        k3 = _rhs(model, p, [a + 0.5 * h * b for a, b in zip(x, k2)], um, t + 0.5 * h)
        k4 = _rhs(model, p, [a + h * b for a, b in zip(x, k3)], U[k + 1], t + h)
        nxt = [a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
               for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)]
        if not all(math.isfinite(v) for v in nxt):
            raise IntegrationDivergedCore(t)
        X.append(nxt)
    return np.array(X)


def sweep_backward(model, params, T, nsteps, X, U):
    p = list(map(float, params))
    X = np.asarray(X).tolist()
    U = np.asarray(U).tolist()
    h = T / nsteps
    nx = len(X[0])
    Lam = [None] * (nsteps + 1)
    Lam[nsteps] = [0.0] * nx
    for k in range(nsteps, 0, -1):
        t = k * h
        lam = Lam[k]
        um = [0.5 * (a + b) for a, b in zip(U[k], U[k - 1])]
        xm = [0.5 * (a + b) for a, b in zip(X[k], X[k - 1])]
        k1 = _adjoint_rhs(model, p, X[k], lam, U[k], t)
        k2 = _adjoint_rhs(model, p, xm, [a - 0.5 * h * b for a, b in zip(lam, k1)],
                          um, t - 0.5 * h)
        k3 = _adjoint_rhs(model, p, xm, [a - 0.5 * h * b for a, b in zip(lam, k2)],
                          um, t - 0.5 * h)
        k4 = _adjoint_rhs(model, p, X[k - 1], [a - h * b for a, b in zip(lam, k3)],
                          U[k - 1], t - h)
        prev = [a - h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                for a, b1, b2, b3, b4 in zip(lam, k1, k2, k3, k4)]
        if not all(math.isfinite(v) for v in prev):
            raise IntegrationDivergedCore(t)
        Lam[k - 1] = prev
    return np.array(Lam)


def characterize_nodes(model, params, X, Lam, bounds):
    p = list(map(float, params))
    bnd = np.asarray(bounds).tolist()
    return np.array([_characterize(model, p, x, lam, bnd)
                     for x, lam in zip(np.asarray(X).tolist(),
                                       np.asarray(Lam).tolist())])


def node_running_cost(model, params, T, nsteps, X, U):
    p = list(map(float, params))
    h = T / nsteps
    acc = 0.0
    for k, (x, u) in enumerate(zip(np.asarray(X).tolist(), np.asarray(U).tolist())):
        lk = _running(model, p, x, u, k * h)
        acc += 0.5 * lk if k in (0, nsteps) else lk
    return h * acc
