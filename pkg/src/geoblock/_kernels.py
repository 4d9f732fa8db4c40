"""Hot numerical kernels for the geodesic flow on f(y)-tori.

Every function in this module is written in the numba-compatible subset of
numpy Python.  When numba is importable (and ``GEOBLOCK_DISABLE_NUMBA`` is
unset) the kernels are JIT-compiled with ``@njit(cache=True)``; otherwise the
identical source runs interpreted as the pure-numpy fallback path.  See
``benchmarks/bench_kernels.py`` for the speed comparison.

State layout: ``(x, y, xi, eta, J, Jp)`` in universal-cover coordinates, with
``xi, eta`` the velocity coefficients in (d/dx, d/dy) and ``J, Jp`` an optional
scalar Jacobi field.  The metric is ``ds^2 = f(y)^2 dx^2 + dy^2`` with f given
by an integer kind code plus a parameter vector (see ``profiles.py``).
"""

import os

import numpy as np

_flag = os.environ.get("GEOBLOCK_DISABLE_NUMBA", "").strip().lower()
_DISABLE = _flag not in ("", "0", "false", "no")

try:
    if _DISABLE:
        raise ImportError
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


KIND_FLAT = 0
KIND_ROUND = 1
KIND_FOURIER = 2

TWO_PI = 2.0 * np.pi

# integrator status codes
OK = 0
STEP_FAILURE = 1

# Dormand-Prince 5(4) tableau
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
# y5 - y4 error weights (b5 - b4), stage 2 weight is zero
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)


@njit(cache=True)
def f_eval(kind, params, y):
    """Profile value and first two derivatives at latitude y (closed forms)."""
    if kind == KIND_FLAT:
        return 1.0, 0.0, 0.0
    elif kind == KIND_ROUND:
        r = params[0]
        cv = np.cos(TWO_PI * y)
        sv = np.sin(TWO_PI * y)
        return params[1] - r * cv, TWO_PI * r * sv, TWO_PI * TWO_PI * r * cv
    else:
        a0 = params[0]
        nharm = int(params[1])
        f = a0
        fp = 0.0
        fpp = 0.0
        for k in range(1, nharm + 1):
            w = TWO_PI * k
            ck = params[1 + k]
            sk = params[1 + nharm + k]
            cv = np.cos(w * y)
            sv = np.sin(w * y)
            f += ck * cv + sk * sv
            fp += w * (sk * cv - ck * sv)
            fpp -= w * w * (ck * cv + sk * sv)
        return f, fp, fpp


@njit(cache=True)
def _rhs(kind, params, y, out, ncomp):
    # geodesic equations of ds^2 = f^2 dx^2 + dy^2, plus scalar Jacobi field:
    #   xi' = -2 (f'/f) xi eta,  eta' = f f' xi^2,  J'' = (f''/f) J
    f, fp, fpp = f_eval(kind, params, y[1])
    xi = y[2]
    eta = y[3]
    out[0] = xi
    out[1] = eta
    out[2] = -2.0 * (fp / f) * xi * eta
    out[3] = f * fp * xi * xi
    if ncomp == 6:
        out[4] = y[5]
        out[5] = (fpp / f) * y[4]


@njit(cache=True)
def _dopri_step(kind, params, y, h, ncomp, ynew, yerr, wk):
    # one Dormand-Prince 5(4) step; fills ynew (5th order) and yerr
    k1 = wk[0]
    k2 = wk[1]
    k3 = wk[2]
    k4 = wk[3]
    k5 = wk[4]
    k6 = wk[5]
    k7 = wk[6]
    yt = wk[7]
    _rhs(kind, params, y, k1, ncomp)
    for i in range(ncomp):
        yt[i] = y[i] + h * _A21 * k1[i]
    _rhs(kind, params, yt, k2, ncomp)
    for i in range(ncomp):
        yt[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
    _rhs(kind, params, yt, k3, ncomp)
    for i in range(ncomp):
        yt[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
    _rhs(kind, params, yt, k4, ncomp)
    for i in range(ncomp):
        yt[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
    _rhs(kind, params, yt, k5, ncomp)
    for i in range(ncomp):
        yt[i] = y[i] + h * (
            _A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i]
        )
    _rhs(kind, params, yt, k6, ncomp)
    for i in range(ncomp):
        ynew[i] = y[i] + h * (
            _B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i]
        )
    _rhs(kind, params, ynew, k7, ncomp)
    for i in range(ncomp):
        yerr[i] = h * (
            _E1 * k1[i]
            + _E3 * k3[i]
            + _E4 * k4[i]
            + _E5 * k5[i]
            + _E6 * k6[i]
            + _E7 * k7[i]
        )


@njit(cache=True)
def _renorm_speed(kind, params, y):
    # project velocity back onto the unit-speed level set
    f, fp, fpp = f_eval(kind, params, y[1])
    e = f * f * y[2] * y[2] + y[3] * y[3]
    s = 1.0 / np.sqrt(e)
    y[2] *= s
    y[3] *= s


@njit(cache=True)
def _err_norm(ynew, yerr, yold, rtol, atol, ncomp):
    acc = 0.0
    for i in range(ncomp):
        sc = atol + rtol * max(abs(yold[i]), abs(ynew[i]))
        r = yerr[i] / sc
        acc += r * r
    return np.sqrt(acc / ncomp)


@njit(cache=True)
def integrate_path(kind, params, y0, length, rtol, atol, out_step, ncomp, renorm):
    """Adaptive integration from t=0 to t=length, recording every accepted step.

    Returns (ts, ys, status).  Step sizes are capped at out_step so consecutive
    samples are never farther apart than the configured output step.
    """
    cap = 1024
    ts = np.empty(cap)
    ys = np.empty((cap, 6))
    y = np.empty(6)
    ynew = np.empty(6)
    yerr = np.empty(6)
    wk = np.empty((8, 6))
    for i in range(6):
        y[i] = y0[i]
    t = 0.0
    n = 0
    ts[0] = 0.0
    for i in range(6):
        ys[0, i] = y[i]
    n = 1
    h = min(out_step, length, 1e-3)
    status = OK
    # a remaining sliver below float resolution counts as arrival
    while length - t > 1e-14 * (1.0 + length):
        if h > length - t:
            h = length - t
        _dopri_step(kind, params, y, h, ncomp, ynew, yerr, wk)
        err = _err_norm(ynew, yerr, y, rtol, atol, ncomp)
        if err <= 1.0:
            t += h
            for i in range(ncomp):
                y[i] = ynew[i]
            if renorm:
                _renorm_speed(kind, params, y)
            if n >= cap:
                cap2 = cap * 2
                ts2 = np.empty(cap2)
                ys2 = np.empty((cap2, 6))
                ts2[:cap] = ts
                ys2[:cap] = ys
                ts = ts2
                ys = ys2
                cap = cap2
            ts[n] = t
            for i in range(6):
                ys[n, i] = y[i]
            n += 1
        # PI-free standard step controller
        if err == 0.0:
            fac = 5.0
        else:
            fac = 0.9 * err ** (-0.2)
            if fac < 0.2:
                fac = 0.2
            elif fac > 5.0:
                fac = 5.0
        h = h * fac
        if h > out_step:
            h = out_step
        if h < 1e-14 * (1.0 + abs(t)):
            status = STEP_FAILURE
            break
    return ts[:n], ys[:n], status


@njit(cache=True)
def integrate_final(kind, params, y0, length, rtol, atol, max_h, renorm, ncomp):
    """Like integrate_path but stores nothing; returns (state, status)."""
    y = np.empty(6)
    ynew = np.empty(6)
    yerr = np.empty(6)
    wk = np.empty((8, 6))
    for i in range(6):
        y[i] = y0[i]
    t = 0.0
    h = min(max_h, length, 1e-3)
    status = OK
    while length - t > 1e-14 * (1.0 + length):
        if h > length - t:
            h = length - t
        _dopri_step(kind, params, y, h, ncomp, ynew, yerr, wk)
        err = _err_norm(ynew, yerr, y, rtol, atol, ncomp)
        if err <= 1.0:
            t += h
            for i in range(ncomp):
                y[i] = ynew[i]
            if renorm:
                _renorm_speed(kind, params, y)
        if err == 0.0:
            fac = 5.0
        else:
            fac = 0.9 * err ** (-0.2)
            if fac < 0.2:
                fac = 0.2
            elif fac > 5.0:
                fac = 5.0
        h = h * fac
        if h > max_h:
            h = max_h
        if h < 1e-14 * (1.0 + abs(t)):
            status = STEP_FAILURE
            break
    return y, status


@njit(cache=True)
def jacobi_along(kind, params, ts, states, J0, J0p, rtol, atol):
    """Propagate the scalar Jacobi field along stored carrier samples.

    The pair (J, J') is co-integrated with the geodesic over each sampling
    interval, restarting the carrier from the stored sample.  Restarting keeps
    long near-separatrix carriers shadowed instead of re-integrating them from
    t=0 through their unstable direction.  Returns (J, Jp, status) at the
    sample times.
    """
    n = ts.shape[0]
    J = np.empty(n)
    Jp = np.empty(n)
    J[0] = J0
    Jp[0] = J0p
    y0 = np.empty(6)
    status = OK
    for i in range(n - 1):
        for c in range(4):
            y0[c] = states[i, c]
        y0[4] = J[i]
        y0[5] = Jp[i]
        dt = ts[i + 1] - ts[i]
        yend, st = integrate_final(kind, params, y0, dt, rtol, atol, dt, True, 6)
        if st != OK:
            status = st
            break
        J[i + 1] = yend[4]
        Jp[i + 1] = yend[5]
    return J, Jp, status


@njit(cache=True)
def integrate_until_latitude(kind, params, y0, y_target, t_max, rtol, atol, max_h):
    """Integrate until the y coordinate first crosses y_target.

    Returns (state, t, hit).  The crossing is refined by bisection on the step
    fraction until |y - y_target| < 1e-13.  Storage-free.
    """
    y = np.empty(6)
    ynew = np.empty(6)
    yerr = np.empty(6)
    wk = np.empty((8, 6))
    for i in range(6):
        y[i] = y0[i]
    t = 0.0
    h = min(max_h, 1e-3)
    side0 = y[1] - y_target
    while t < t_max:
        if h > t_max - t:
            h = t_max - t
        _dopri_step(kind, params, y, h, 4, ynew, yerr, wk)
        err = _err_norm(ynew, yerr, y, rtol, atol, 4)
        if err <= 1.0:
            if (ynew[1] - y_target) * side0 <= 0.0:
                # crossing inside this step: bisect on the fraction
                lo = 0.0
                hi = h
                ymid = np.empty(6)
                for _ in range(80):
                    mid = 0.5 * (lo + hi)
                    _dopri_step(kind, params, y, mid, 4, ymid, yerr, wk)
                    if (ymid[1] - y_target) * side0 <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                    if hi - lo < 1e-16 * (1.0 + t) or abs(ymid[1] - y_target) < 1e-13:
                        break
                _dopri_step(kind, params, y, 0.5 * (lo + hi), 4, ymid, yerr, wk)
                _renorm_speed(kind, params, ymid)
                return ymid, t + 0.5 * (lo + hi), True
            t += h
            for i in range(4):
                y[i] = ynew[i]
            _renorm_speed(kind, params, y)
        if err == 0.0:
            fac = 5.0
        else:
            fac = 0.9 * err ** (-0.2)
            if fac < 0.2:
                fac = 0.2
            elif fac > 5.0:
                fac = 5.0
        h = h * fac
        if h > max_h:
            h = max_h
        if h < 1e-14 * (1.0 + abs(t)):
            break
    return y, t, False


@njit(cache=True)
def sweep_events(kind, params, px, py, thetas, length, qx, qy, capture2, rtol, atol, out_step):
    """Angle sweep collecting near-passes to lattice lifts of (qx, qy).

    For every initial angle the geodesic from (px, py) is integrated to
    `length` with inline event tracking (no sample storage): whenever the
    trace has a local closest approach (within sqrt(capture2), measured in
    the frozen quadratic form) to some lift (qx + m, qy + n), an event
    (m, n, t_at_min, dist2) is recorded.  Returns (events, counts).
    """
    nth = thetas.shape[0]
    max_ev = int(length / 0.4) + 8
    events = np.zeros((nth, max_ev, 4))
    counts = np.zeros(nth, dtype=np.int64)
    y = np.empty(6)
    ynew = np.empty(6)
    yerr = np.empty(6)
    wk = np.empty((8, 6))
    for it in range(nth):
        f0, fp0, fpp0 = f_eval(kind, params, py)
        th = thetas[it]
        y[0] = px
        y[1] = py
        y[2] = np.cos(th) / f0
        y[3] = np.sin(th)
        t = 0.0
        h = min(out_step, length, 1e-3)
        tol_end = 1e-14 * (1.0 + length)
        cur_m = 10 ** 9
        cur_n = 10 ** 9
        best_d2 = 1e300
        best_t = 0.0
        nev = 0
        while length - t > tol_end:
            if h > length - t:
                h = length - t
            _dopri_step(kind, params, y, h, 4, ynew, yerr, wk)
            err = _err_norm(ynew, yerr, y, rtol, atol, 4)
            if err <= 1.0:
                t += h
                for i in range(4):
                    y[i] = ynew[i]
                _renorm_speed(kind, params, y)
                dx = y[0] - qx
                dy = y[1] - qy
                m = int(np.floor(dx + 0.5))
                nn = int(np.floor(dy + 0.5))
                fv, fpv, fppv = f_eval(kind, params, y[1])
                rx = dx - m
                ry = dy - nn
                d2 = fv * fv * rx * rx + ry * ry
                if m != cur_m or nn != cur_n:
                    if best_d2 < capture2 and nev < max_ev:
                        events[it, nev, 0] = cur_m
                        events[it, nev, 1] = cur_n
                        events[it, nev, 2] = best_t
                        events[it, nev, 3] = best_d2
                        nev += 1
                    cur_m = m
                    cur_n = nn
                    best_d2 = d2
                    best_t = t
                elif d2 < best_d2:
                    best_d2 = d2
                    best_t = t
            if err == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * err ** (-0.2)
                if fac < 0.2:
                    fac = 0.2
                elif fac > 5.0:
                    fac = 5.0
            h = h * fac
            if h > out_step:
                h = out_step
            if h < 1e-14 * (1.0 + abs(t)):
                break
        if best_d2 < capture2 and nev < max_ev:
            events[it, nev, 0] = cur_m
            events[it, nev, 1] = cur_n
            events[it, nev, 2] = best_t
            events[it, nev, 3] = best_d2
            nev += 1
        counts[it] = nev
    return events, counts


@njit(cache=True)
def quad_dist(kind, params, ax, ay, bx, by):
    # short-range distance via the midpoint-frozen quadratic form
    f, fp, fpp = f_eval(kind, params, 0.5 * (ay + by))
    dx = bx - ax
    dy = by - ay
    return np.sqrt(f * f * dx * dx + dy * dy)


@njit(cache=True)
def short_connect(kind, params, ax, ay, bx, by, tol, rtol, atol):
    """Two-point geodesic for nearby cover points by Newton shooting.

    Returns (midx, midy, length, ok).  Designed for segment lengths well below
    the injectivity scale; used by the curve-shortening inner loop.
    """
    y0 = np.empty(6)
    dx = bx - ax
    dy = by - ay
    L = quad_dist(kind, params, ax, ay, bx, by)
    if L < 1e-15:
        return ax, ay, 0.0, True
    f0, fp0, fpp0 = f_eval(kind, params, ay)
    th = np.arctan2(dy, f0 * dx)
    ok = False
    for _ in range(12):
        y0[0] = ax
        y0[1] = ay
        y0[2] = np.cos(th) / f0
        y0[3] = np.sin(th)
        yend, status = integrate_final(kind, params, y0, L, rtol, atol, 0.25 * L + 1e-6, True, 4)
        if status != OK:
            return 0.0, 0.0, 0.0, False
        fe, fpe, fppe = f_eval(kind, params, yend[1])
        ex = yend[0] - bx
        ey = yend[1] - by
        resid = np.sqrt(fe * fe * ex * ex + ey * ey)
        if resid < tol:
            ok = True
            break
        # orthonormal-frame velocity at the end and its left-normal
        vx = fe * yend[2]
        vy = yend[3]
        exo = fe * ex
        eyo = ey
        along = exo * vx + eyo * vy
        perp = -exo * vy + eyo * vx
        L = L - along
        th = th - perp / max(L, 1e-12)
        if L <= 0.0:
            L = 0.5 * quad_dist(kind, params, ax, ay, bx, by)
    if not ok:
        return 0.0, 0.0, 0.0, False
    y0[0] = ax
    y0[1] = ay
    y0[2] = np.cos(th) / f0
    y0[3] = np.sin(th)
    ymid, status = integrate_final(kind, params, y0, 0.5 * L, rtol, atol, 0.25 * L + 1e-6, True, 4)
    if status != OK:
        return 0.0, 0.0, 0.0, False
    return ymid[0], ymid[1], L, True


@njit(cache=True)
def birkhoff_stage(kind, params, V, m, n, decrease_tol, max_sweeps, rtol, atol):
    """Curve-shortening sweeps on a closed polygon of winding (m, n).

    V has shape (K, 2); the loop closes as V[K] = V[0] + (m, n).  Each sweep
    replaces alternating vertices by the geodesic midpoint of their neighbours
    and stops when the quadrature length decreases by less than decrease_tol.
    Returns (length, sweeps, converged).
    """
    K = V.shape[0]
    prev_len = 1e300
    sweeps = 0
    converged = False
    ctol = 1e-12
    for sweep in range(max_sweeps):
        for parity in range(2):
            for i in range(parity, K, 2):
                if i == 0:
                    ax = V[K - 1, 0] - m
                    ay = V[K - 1, 1] - n
                else:
                    ax = V[i - 1, 0]
                    ay = V[i - 1, 1]
                if i == K - 1:
                    bx = V[0, 0] + m
                    by = V[0, 1] + n
                else:
                    bx = V[i + 1, 0]
                    by = V[i + 1, 1]
                mx, my, L, ok = short_connect(kind, params, ax, ay, bx, by, ctol, rtol, atol)
                if ok:
                    V[i, 0] = mx
                    V[i, 1] = my
        total = 0.0
        for i in range(K):
            if i == K - 1:
                bx = V[0, 0] + m
                by = V[0, 1] + n
            else:
                bx = V[i + 1, 0]
                by = V[i + 1, 1]
            total += quad_dist(kind, params, V[i, 0], V[i, 1], bx, by)
        sweeps = sweep + 1
        if prev_len - total < decrease_tol:
            converged = True
            prev_len = total
            break
        prev_len = total
    return prev_len, sweeps, converged


@njit(cache=True)
def polyline_min_dist2_to_point(kind, params, xs, ys_, bx, by, wrap):
    """Min squared distance (frozen quadratic form) from sampled points to (bx, by).

    With wrap=True the difference is reduced modulo the integer lattice, i.e.
    the points are compared on the torus.  Returns (d2min, index).
    """
    best = 1e300
    arg = 0
    for i in range(xs.shape[0]):
        dx = xs[i] - bx
        dy = ys_[i] - by
        if wrap:
            dx = dx - np.floor(dx + 0.5)
            dy = dy - np.floor(dy + 0.5)
        f, fp, fpp = f_eval(kind, params, ys_[i])
        d2 = f * f * dx * dx + dy * dy
        if d2 < best:
            best = d2
            arg = i
    return best, arg


def warmup():
    """Trigger JIT compilation of all kernels (no-op in fallback mode)."""
    params = np.array([1.0, 2.0])
    y0 = np.array([0.0, 0.25, 0.0, 1.0, 0.0, 1.0])
    _renorm_speed(KIND_ROUND, params, y0)
    ts, ys, _ = integrate_path(KIND_ROUND, params, y0, 0.2, 1e-10, 1e-10, 0.05, 6, True)
    integrate_final(KIND_ROUND, params, y0, 0.2, 1e-10, 1e-10, 0.05, True, 4)
    jacobi_along(KIND_ROUND, params, ts, ys[:, :4].copy(), 0.0, 1.0, 1e-10, 1e-10)
    integrate_until_latitude(KIND_ROUND, params, y0, 0.3, 1.0, 1e-10, 1e-10, 0.05)
    sweep_events(
        KIND_ROUND, params, 0.0, 0.25, np.array([0.3]), 0.5, 0.5, 0.25, 0.2, 1e-8, 1e-8, 0.05
    )
    short_connect(KIND_ROUND, params, 0.0, 0.2, 0.05, 0.22, 1e-10, 1e-10, 1e-10)
    V = np.array([[0.0, 0.2], [0.25, 0.2], [0.5, 0.2], [0.75, 0.2]])
    birkhoff_stage(KIND_ROUND, params, V, 1, 0, 1e-6, 2, 1e-8, 1e-8)
    polyline_min_dist2_to_point(
        KIND_ROUND, params, np.array([0.0, 0.1]), np.array([0.2, 0.2]), 0.5, 0.5, True
    )
