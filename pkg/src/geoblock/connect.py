"""Two-point geodesic problems, enumeration, and minimal periodic geodesics.

Joining geodesics are found by shooting in the universal cover: a sweep of
initial angles collects near-passes to the lattice lifts of the target, and
each basin is refined by a secant/bisection hybrid on the signed miss distance
at closest approach.  Minimal closed geodesics in a prime homology class come
from discrete curve shortening (alternating midpoint insertion and local
geodesic replacement) followed by a Gauss-Newton closure polish.

Near-separatrix connectors inside an admissible strip (the certificate
ladder) cannot be reached by angle shooting in double precision: the basin
width shrinks like exp(-2 pi L_slide).  For those the shooting unknown is
moved to the turning latitude (or to the boundary touch-down velocity), where
the delicate quantity is an absolutely small, representable number; the two
outward legs are then glued into an `assembled` trace.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import OK
from .errors import MissingGeodesic, NoConvergence, NotPrime, StepFailure, ZeroDisplacement
from .flow import (
    DEFAULT_ATOL,
    DEFAULT_OUT_STEP,
    DEFAULT_RTOL,
    GeodesicTrace,
    PhaseState,
    integrate,
)
from .profiles import CoverPoint, MetricProfile, TorusPoint, eval_f, f_array

SWEEP_RTOL = 1e-9
SWEEP_OUT_STEP = 0.05
HIT_TOL = 1e-8
CAPTURE_RADIUS = 0.45
MINIMAL_MARGIN = 1e-6
DEDUP_THETA = 1e-7
HAUSDORFF_TOL = 1e-4


@dataclass(frozen=True)
class HomologyClass:
    """Integer pair (m, n) naming a free homotopy class of loops."""

    m: int
    n: int

    def __post_init__(self):
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "n", int(self.n))

    @property
    def is_zero(self) -> bool:
        return self.m == 0 and self.n == 0

    def is_prime(self) -> bool:
        if self.is_zero:
            return False
        return math.gcd(abs(self.m), abs(self.n)) == 1

    def dot(self, other: "HomologyClass") -> int:
        """Homological intersection m1*n2 - n1*m2."""
        return self.m * other.n - self.n * other.m

    def as_tuple(self):
        return (self.m, self.n)


@dataclass
class JoiningGeodesic:
    """A refined geodesic from p to a lattice lift of q."""

    trace: GeodesicTrace
    offset: HomologyClass
    hit_error: float
    theta: float
    minimal: bool = False
    margin: float = float("nan")

    @property
    def length(self) -> float:
        return self.trace.length

    def record(self) -> dict:
        return {
            "offset_m": self.offset.m,
            "offset_n": self.offset.n,
            "length": self.length,
            "hit_error": self.hit_error,
            "theta": self.theta,
            "minimal": self.minimal,
            "margin": self.margin,
        }


@dataclass
class ConnectionProblem:
    """Endpoint pair plus target lift displacement and a length budget."""

    p: TorusPoint
    q: TorusPoint
    lift_offset: HomologyClass
    max_length: float

    def __post_init__(self):
        if self.max_length <= 0:
            raise ValueError("max_length must be positive")

    @property
    def target(self) -> CoverPoint:
        return CoverPoint(self.q.x + self.lift_offset.m, self.q.y + self.lift_offset.n)


def _quad_dist(profile, ax, ay, bx, by):
    code, params = profile.kernel_args
    return _kernels.quad_dist(code, params, ax, ay, bx, by)


def _closest_approach(trace: GeodesicTrace, tx: float, ty: float, profile: MetricProfile, cheap: bool = False):
    """(t*, dist, signed_dist) of the closest approach to a cover point.

    The sampled minimum is refined by projecting onto the adjacent polyline
    segments; with cheap=True the state there is linearly interpolated
    instead of re-integrated (enough for the loose search phase).
    """
    X, Y = trace.X, trace.Y
    fv = f_array(profile, Y)
    dx = (X - tx) * fv
    dy = Y - ty
    d2 = dx * dx + dy * dy
    i = int(np.argmin(d2))
    tbest = trace.t[i]
    dbest = math.sqrt(d2[i])
    for j in (i - 1, i):
        if j < 0 or j + 1 >= len(X):
            continue
        sx, sy = X[j + 1] - X[j], Y[j + 1] - Y[j]
        seg2 = sx * sx + sy * sy
        if seg2 == 0.0:
            continue
        lam = ((tx - X[j]) * sx + (ty - Y[j]) * sy) / seg2
        if 0.0 < lam < 1.0:
            tc = trace.t[j] + lam * (trace.t[j + 1] - trace.t[j])
            if cheap:
                px = X[j] + lam * sx
                py = Y[j] + lam * sy
                dc = _quad_dist(profile, px, py, tx, ty)
            else:
                stc = trace.state_at(profile, tc)
                dc = _quad_dist(profile, stc.x, stc.y, tx, ty)
            if dc < dbest:
                tbest, dbest = tc, dc
    if cheap:
        i2 = min(i, len(X) - 2)
        f = fv[i2]
        vx, vy = f * trace.samples[i2, 2], trace.samples[i2, 3]
        ex, ey = f * (tx - X[i2]), ty - Y[i2]
    else:
        st = trace.state_at(profile, tbest)
        f, _, _ = eval_f(profile, st.y)
        vx, vy = f * st.xi, st.eta
        ex, ey = f * (tx - st.x), ty - st.y
    cross = vx * ey - vy * ex
    sgn = 1.0 if cross >= 0.0 else -1.0
    return float(tbest), float(dbest), float(sgn * dbest)


def shoot(
    profile: MetricProfile,
    p,
    target: CoverPoint,
    theta0: float,
    max_length: float,
    offset: HomologyClass = None,
    hit_tol: float = HIT_TOL,
    max_iter: int = 60,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    out_step: float = DEFAULT_OUT_STEP,
    theta1: float = None,
    t_hint: float = None,
) -> JoiningGeodesic:
    """Refine an initial angle until the geodesic from p hits the cover target.

    Secant steps on the signed miss distance at closest approach, falling back
    to bisection whenever a sign-change bracket is known.  The returned trace
    is cut at the closest approach.  Raises NoConvergence when the seed's
    basin does not contain a solution.
    """
    if isinstance(p, TorusPoint):
        p = p.lift()
    if abs(p.X - target.X) < 1e-15 and abs(p.Y - target.Y) < 1e-15:
        raise ValueError("target coincides with the start lift")

    if t_hint is not None:
        horizon = [min(max_length, t_hint + max(0.5, 0.02 * t_hint))]
    else:
        horizon = [max_length]

    def miss(theta, rt, at, step):
        st = PhaseState.from_angle(profile, p.X, p.Y, theta)
        tr = integrate(profile, st, horizon[0], rtol=rt, atol=at, out_step=step)
        tstar, dist, signed = _closest_approach(
            tr, target.X, target.Y, profile, cheap=(rt > 1.5 * rtol)
        )
        if dist < 0.1:
            # the approach parameter is now pinned; stop paying for the tail
            horizon[0] = min(horizon[0], tstar + max(0.5, 0.02 * tstar))
        return tstar, dist, signed, tr

    # phase 1 is a cheap basin search at loose tolerance; a short tight phase
    # polishes the angle once the miss distance is small
    loose = (max(rtol, 1e-9), max(atol, 1e-9), max(out_step, 0.05))
    tight = (rtol, atol, out_step)
    theta = float(theta0)
    tstar, dist, signed, tr = miss(theta, *loose)
    prev = (theta, signed)
    best = (dist, theta, tstar, tr)
    if theta1 is not None and dist >= hit_tol:
        # second sweep seed: start the secant with a real slope estimate
        prev = (theta, signed)
        theta = float(theta1)
        tstar, dist, signed, tr = miss(theta, *loose)
        if dist < best[0]:
            best = (dist, theta, tstar, tr)
    pos_side = None
    neg_side = None
    phase_tol = max(hit_tol, 1e-6)
    mode = loose
    stall = 0
    for it in range(max_iter):
        if mode is loose and dist < phase_tol:
            mode = tight
            prev = (theta, signed)
            tstar, dist, signed, tr = miss(theta, *tight)
            best = (dist, theta, tstar, tr)
        if dist < hit_tol:
            break
        if signed >= 0:
            pos_side = (theta, signed)
        else:
            neg_side = (theta, signed)
        theta_new = None
        if prev[0] != theta and prev[1] != signed:
            denom = signed - prev[1]
            if denom != 0.0:
                theta_new = theta - signed * (theta - prev[0]) / denom
        if pos_side is not None and neg_side is not None:
            lo = min(pos_side[0], neg_side[0])
            hi = max(pos_side[0], neg_side[0])
            if theta_new is None or not (lo < theta_new < hi):
                theta_new = 0.5 * (lo + hi)
        if theta_new is None or theta_new == theta:
            theta_new = theta + (1e-6 if it % 2 == 0 else -2e-6)
        prev = (theta, signed)
        theta = theta_new
        tstar, dist, signed, tr = miss(theta, *mode)
        if dist < 0.5 * best[0]:
            stall = 0
        else:
            stall += 1
            if stall >= 12:
                break
        if dist < best[0]:
            best = (dist, theta, tstar, tr)
    dist, theta, tstar, tr = best
    if mode is loose and dist < phase_tol:
        mode = tight
        tstar, dist, signed, tr = miss(theta, *tight)
    if dist >= hit_tol:
        raise NoConvergence(f"shoot did not converge (best miss {dist:.3g})")
    final = _truncate(profile, tr, tstar, rtol, atol, out_step)
    e = final.end
    hit = _quad_dist(profile, e.x, e.y, target.X, target.Y)
    if offset is None:
        offset = HomologyClass(0, 0)
    return JoiningGeodesic(trace=final, offset=offset, hit_error=float(hit), theta=float(theta))


def _truncate(profile, tr: GeodesicTrace, tstar: float, rtol, atol, out_step) -> GeodesicTrace:
    """Cut a trace at parameter tstar, re-integrating only the final partial step."""
    tstar = max(tstar, 1e-9)
    i = int(np.searchsorted(tr.t, tstar, side="right") - 1)
    i = min(max(i, 0), len(tr.t) - 1)
    dt = tstar - tr.t[i]
    t = tr.t[: i + 1].copy()
    samples = tr.samples[: i + 1].copy()
    if dt > 1e-13:
        code, params = profile.kernel_args
        y0 = np.zeros(6)
        y0[:4] = tr.samples[i]
        yend, status = _kernels.integrate_final(code, params, y0, dt, rtol, atol, out_step, True, 4)
        if status != OK:
            raise StepFailure("truncation step failed")
        t = np.append(t, tstar)
        samples = np.vstack([samples, yend[:4]])
    return GeodesicTrace(
        t=t, samples=samples, length=float(tstar),
        rtol=tr.rtol, atol=tr.atol, out_step=tr.out_step, assembled=tr.assembled,
    )


def _sweep(profile, p: CoverPoint, q: CoverPoint, max_length, n_sweep):
    code, params = profile.kernel_args
    thetas = 2.0 * math.pi * np.arange(n_sweep) / n_sweep
    events, counts = _kernels.sweep_events(
        code,
        params,
        p.X,
        p.Y,
        thetas,
        float(max_length),
        q.X,
        q.Y,
        CAPTURE_RADIUS**2,
        SWEEP_RTOL,
        SWEEP_RTOL,
        SWEEP_OUT_STEP,
    )
    return thetas, events, counts


def _cluster_events(evs, n_sweep):
    """Group (theta_idx, t, d) events by cyclic angle adjacency and t proximity."""
    clusters = []
    for ev in evs:
        placed = False
        for cl in clusters:
            last = cl[-1]
            gap = min((ev[0] - last[0]) % n_sweep, (last[0] - ev[0]) % n_sweep)
            if gap <= 1 and abs(ev[1] - last[1]) < max(0.5, 10 * SWEEP_OUT_STEP):
                cl.append(ev)
                placed = True
                break
        if not placed:
            clusters.append([ev])
    if len(clusters) > 1:
        first, last = clusters[0], clusters[-1]
        gap = (first[0][0] - last[-1][0]) % n_sweep
        if gap <= 1 and abs(first[0][1] - last[-1][1]) < max(0.5, 10 * SWEEP_OUT_STEP):
            clusters[0] = last + first
            clusters.pop()
    return clusters


def enumerate_joining(
    profile: MetricProfile,
    p: TorusPoint,
    q: TorusPoint,
    max_length: float,
    n_sweep: int = 4096,
    saturate: bool = False,
    max_sweep: int = 32768,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    out_step: float = DEFAULT_OUT_STEP,
) -> list:
    """All joining geodesics from p to q of length <= max_length found by the sweep.

    Enumeration is best-effort: basins narrower than the sweep resolution are
    missed, so completeness is reported via sweep saturation, never claimed.
    With saturate=True the sweep doubles until a doubling finds nothing new.
    Results are sorted by length and deterministic for a fixed configuration.
    """
    results = _enumerate_once(profile, p, q, max_length, n_sweep, rtol, atol, out_step)
    if saturate:
        while n_sweep * 2 <= max_sweep:
            n_sweep *= 2
            more = _enumerate_once(profile, p, q, max_length, n_sweep, rtol, atol, out_step)
            if len(more) <= len(results):
                break
            results = more
    return results


def _enumerate_once(profile, p, q, max_length, n_sweep, rtol, atol, out_step):
    P = p.lift()
    Q = q.lift()
    thetas, events, counts = _sweep(profile, P, Q, max_length, n_sweep)
    self_pair = p == q
    by_cell = {}
    for it in range(n_sweep):
        for j in range(counts[it]):
            m = int(events[it, j, 0])
            n = int(events[it, j, 1])
            if self_pair and m == 0 and n == 0:
                continue
            t_ev = float(events[it, j, 2])
            d = math.sqrt(float(events[it, j, 3]))
            by_cell.setdefault((m, n), []).append((it, t_ev, d))

    found = []
    for cell in sorted(by_cell):
        target = CoverPoint(Q.X + cell[0], Q.Y + cell[1])
        for cl in _cluster_events(sorted(by_cell[cell]), n_sweep):
            it, t_ev, d = min(cl, key=lambda e: e[2])
            try:
                jg = shoot(
                    profile,
                    P,
                    target,
                    thetas[it],
                    min(max_length + 0.5, max(t_ev * 1.5, t_ev + 1.0)),
                    offset=HomologyClass(cell[0], cell[1]),
                    rtol=rtol,
                    atol=atol,
                    out_step=out_step,
                    t_hint=t_ev,
                )
            except (NoConvergence, StepFailure):
                continue
            if jg.trace.length > max_length + 1e-9:
                continue
            found.append(jg)

    found.sort(key=lambda g: (g.offset.as_tuple(), g.theta, g.length))
    dedup = []
    for g in found:
        dup = any(
            d.offset == g.offset
            and (
                abs(d.theta - g.theta) < DEDUP_THETA
                or abs(abs(d.theta - g.theta) - 2 * math.pi) < DEDUP_THETA
            )
            for d in dedup
        )
        if not dup:
            dedup.append(g)

    best = {}
    for g in dedup:
        key = g.offset.as_tuple()
        if key not in best or g.length < best[key]:
            best[key] = g.length
    for g in dedup:
        g.margin = g.length - best[g.offset.as_tuple()]
        g.minimal = g.margin <= MINIMAL_MARGIN
    dedup.sort(key=lambda g: (g.length, g.offset.as_tuple()))
    return dedup


def _profile_max(profile):
    return float(np.max(f_array(profile, np.linspace(0.0, 1.0, 512, endpoint=False))))


def cover_connect(
    profile: MetricProfile,
    A: CoverPoint,
    B: CoverPoint,
    n_sweep: int = 512,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> JoiningGeodesic:
    """Minimal geodesic between two cover points (targeted mini-enumeration).

    Intended for desk-scale separations; the cost grows with the coordinate
    chord length, which bounds the distance from above.
    """
    fmax = _profile_max(profile)
    upper = math.hypot(fmax * (B.X - A.X), B.Y - A.Y) * 1.0001 + 1e-9
    thetas, events, counts = _sweep(profile, A, B, upper, n_sweep)
    cands = []
    for it in range(n_sweep):
        for j in range(counts[it]):
            if int(events[it, j, 0]) == 0 and int(events[it, j, 1]) == 0:
                cands.append((it, float(events[it, j, 2]), math.sqrt(float(events[it, j, 3]))))
    if not cands:
        raise MissingGeodesic("no sweep angle approached the target")
    best = None
    for cl in _cluster_events(sorted(cands), n_sweep):
        it, t_ev, d = min(cl, key=lambda e: e[2])
        if best is not None and t_ev > best.length:
            continue
        try:
            jg = shoot(
                profile, A, B, thetas[it], max(t_ev * 1.5, t_ev + 1.0),
                rtol=rtol, atol=atol, t_hint=t_ev,
            )
        except (NoConvergence, StepFailure):
            continue
        if best is None or jg.length < best.length:
            best = jg
    if best is None:
        raise MissingGeodesic("shooting failed for every candidate basin")
    return best


def cover_distance(profile: MetricProfile, A: CoverPoint, B: CoverPoint) -> float:
    """Distance in the universal cover (flat profiles short-circuit to Euclid)."""
    if profile.kind == "flat":
        return math.hypot(B.X - A.X, B.Y - A.Y)
    return cover_connect(profile, A, B).length


def torus_distance(profile: MetricProfile, a: TorusPoint, b: TorusPoint, n_sweep: int = 512) -> float:
    """Distance on the torus: best joining geodesic over all nearby lifts.

    One sweep bounded by the chord length of the minimal image collects
    candidate basins against every lift at once; the few best are refined.
    """
    dx = (b.x - a.x) - round(b.x - a.x)
    dy = (b.y - a.y) - round(b.y - a.y)
    if profile.kind == "flat":
        return math.hypot(dx, dy)
    fmax = _profile_max(profile)
    upper = math.hypot(fmax * dx, dy) * 1.0001 + 1e-9
    A = a.lift()
    thetas, events, counts = _sweep(profile, A, b.lift(), upper, n_sweep)
    cands = []
    for it in range(n_sweep):
        for j in range(counts[it]):
            cands.append(
                (
                    it,
                    float(events[it, j, 2]),
                    math.sqrt(float(events[it, j, 3])),
                    int(events[it, j, 0]),
                    int(events[it, j, 1]),
                )
            )
    best = upper
    by_cell = {}
    for c in cands:
        by_cell.setdefault((c[3], c[4]), []).append(c[:3])
    for cell in sorted(by_cell):
        for cl in _cluster_events(sorted(by_cell[cell]), n_sweep):
            it, t_ev, d = min(cl, key=lambda e: e[2])
            if t_ev > best + 1e-9:
                continue
            target = CoverPoint(b.x + cell[0], b.y + cell[1])
            try:
                jg = shoot(profile, A, target, thetas[it], max(t_ev * 1.5, t_ev + 1.0), t_hint=t_ev)
            except (NoConvergence, StepFailure):
                continue
            best = min(best, jg.length)
    return best


def is_homotopically_minimal(
    profile: MetricProfile, trace: GeodesicTrace, offset: HomologyClass = None, tol: float = MINIMAL_MARGIN
):
    """Compare the trace against the best connector of its own lift endpoints.

    Returns (flag, margin) where margin = length - best found length; the
    cover endpoints fix the homotopy class, so the offset argument is only
    validated against the trace winding.
    """
    wx, wy = trace.winding()
    if offset is not None and (round(wx) != offset.m or round(wy) != offset.n):
        raise ValueError("trace endpoints are not lift-compatible with the offset")
    s, e = trace.start, trace.end
    best = cover_distance(profile, CoverPoint(s.x, s.y), CoverPoint(e.x, e.y))
    margin = trace.length - best
    return margin <= tol, float(margin)


def homological_direction(profile: MetricProfile, trace: GeodesicTrace, min_horizon: float = 1.0):
    """Normalized lift displacement as a finite-horizon direction class."""
    if trace.length < min_horizon:
        raise ValueError(f"trace shorter than the minimum horizon {min_horizon}")
    wx, wy = trace.winding()
    norm = math.hypot(wx, wy)
    if norm < 1e-9:
        raise ZeroDisplacement("lift displacement below tolerance")
    return np.array([wx / norm, wy / norm])


# ----------------------------------------------------------------------------
# minimal periodic geodesics by curve shortening
# ----------------------------------------------------------------------------


def _polish_periodic(profile, x0, y0, theta, L, h: "HomologyClass", max_iter=18):
    """Gauss-Newton closure polish of a near-periodic orbit.

    Unknowns are (transversal coordinate, angle, period); the along-orbit
    translation freedom is removed by freezing x0 (or y0 for vertical
    classes).  Returns (state, length) or None.
    """
    code, params = profile.kernel_args
    fix_x = abs(h.m) >= abs(h.n)

    def resid(u):
        c0, th, LL = u
        if LL <= 0:
            return None
        xx = x0 if fix_x else c0
        yy = c0 if fix_x else y0
        st = PhaseState.from_angle(profile, xx, yy, th)
        yv = np.array([st.x, st.y, st.xi, st.eta, 0.0, 0.0])
        yend, status = _kernels.integrate_final(
            code, params, yv, LL, DEFAULT_RTOL, DEFAULT_ATOL, DEFAULT_OUT_STEP, True, 4
        )
        if status != OK:
            return None
        return np.array(
            [
                yend[0] - st.x - h.m,
                yend[1] - st.y - h.n,
                yend[2] - st.xi,
                yend[3] - st.eta,
            ]
        )

    u = np.array([y0 if fix_x else x0, theta, L])
    r = resid(u)
    if r is None:
        return None
    for _ in range(max_iter):
        if np.max(np.abs(r)) < 1e-11:
            break
        Jm = np.empty((4, 3))
        for k in range(3):
            du = np.zeros(3)
            du[k] = 1e-7 * max(1.0, abs(u[k]))
            rp = resid(u + du)
            if rp is None:
                return None
            Jm[:, k] = (rp - r) / du[k]
        step, *_ = np.linalg.lstsq(Jm, -r, rcond=None)
        lam = 1.0
        improved = False
        for _ in range(8):
            rn = resid(u + lam * step)
            if rn is not None and np.linalg.norm(rn) < np.linalg.norm(r):
                u = u + lam * step
                r = rn
                improved = True
                break
            lam *= 0.5
        if not improved:
            break
    if np.max(np.abs(r)) > 1e-9:
        return None
    c0, th, LL = u
    xx = x0 if fix_x else c0
    yy = c0 if fix_x else y0
    return PhaseState.from_angle(profile, xx, yy, th), float(LL)


def _subdivide(profile, V, m, n):
    """Midpoint insertion: double the vertex count of the loop polygon."""
    code, params = profile.kernel_args
    K = V.shape[0]
    out = np.empty((2 * K, 2))
    for i in range(K):
        ax, ay = V[i]
        if i == K - 1:
            bx, by = V[0, 0] + m, V[0, 1] + n
        else:
            bx, by = V[i + 1]
        mx, my, L, ok = _kernels.short_connect(code, params, ax, ay, bx, by, 1e-12, 1e-10, 1e-10)
        out[2 * i] = ax, ay
        out[2 * i + 1] = (mx, my) if ok else (0.5 * (ax + bx), 0.5 * (ay + by))
    return out


def _shorten_loop(profile, base, h: "HomologyClass"):
    """Multigrid curve shortening of one seed loop, then closure polish."""
    code, params = profile.kernel_args
    m, n = h.m, h.n
    k_final = 64 * (abs(m) + abs(n))
    K = max(8, k_final // 4)
    V = np.empty((K, 2))
    for i in range(K):
        V[i, 0] = base[0] + (i / K) * m
        V[i, 1] = base[1] + (i / K) * n
    stage_tols = (1e-10, 1e-11, 1e-12)
    stage = 0
    while True:
        tol = stage_tols[min(stage, 2)]
        L, sweeps, converged = _kernels.birkhoff_stage(
            code, params, V, m, n, tol, 40000, 1e-9, 1e-9
        )
        if V.shape[0] >= k_final:
            break
        V = _subdivide(profile, V, m, n)
        stage += 1
    x0, y0 = V[0]
    dx, dy = V[1, 0] - x0, V[1, 1] - y0
    f0, _, _ = eval_f(profile, y0)
    theta = math.atan2(dy, f0 * dx)
    return _polish_periodic(profile, x0, y0, theta, L, h)


def _hausdorff_torus(profile, tr1: GeodesicTrace, tr2: GeodesicTrace) -> float:
    code, params = profile.kernel_args

    def one_sided(a, b):
        worst = 0.0
        step = max(1, len(a.t) // 256)
        for i in range(0, len(a.t), step):
            d2, _ = _kernels.polyline_min_dist2_to_point(
                code, params, b.X, b.Y, a.X[i], a.Y[i], True
            )
            worst = max(worst, d2)
        return math.sqrt(worst)

    return max(one_sided(tr1, tr2), one_sided(tr2, tr1))


def minimal_periodic(
    profile: MetricProfile,
    h: HomologyClass,
    n_seed: int = 16,
    seed: int = 0,
    length_tol: float = 1e-6,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    extra_seed_points=None,
) -> list:
    """Distinct minimal periodic geodesics in the prime class h.

    Runs curve shortening from n_seed transversally spread initial loops
    (plus optional loops through given cover points), polishes each converged
    loop into a true periodic orbit, keeps the ones matching the best length
    found, and returns one representative per distinct trace, sorted by the
    transversal start coordinate.
    """
    if not h.is_prime():
        raise NotPrime(f"class ({h.m}, {h.n}) is not prime")
    rng = np.random.default_rng(seed)
    w = np.array([-h.n, h.m], dtype=float)
    bases = [((j + 0.5 * rng.random()) / n_seed) * w for j in range(n_seed)]
    if extra_seed_points is not None:
        bases.extend(np.asarray(b, dtype=float) for b in extra_seed_points)

    orbits = []
    for base in bases:
        res = _shorten_loop(profile, base, h)
        if res is not None:
            orbits.append(res)
    if not orbits:
        raise NoConvergence("curve shortening produced no periodic orbit")

    lmin = min(L for _, L in orbits)
    traces = []
    for st, L in sorted(orbits, key=lambda o: (o[1], o[0].x, o[0].y)):
        if L > lmin + length_tol:
            continue
        tr = integrate(profile, st, L, rtol=rtol, atol=atol)
        if all(_hausdorff_torus(profile, tr, t) > HAUSDORFF_TOL for t in traces):
            traces.append(tr)
    fix_x = abs(h.m) >= abs(h.n)
    traces.sort(key=lambda t: (t.start.y % 1.0) if fix_x else (t.start.x % 1.0))
    return traces


# ----------------------------------------------------------------------------
# strip connectors (certificate ladder)
# ----------------------------------------------------------------------------


def _reverse_leg(leg: GeodesicTrace) -> GeodesicTrace:
    t = leg.length - leg.t[::-1]
    s = leg.samples[::-1].copy()
    s[:, 2] *= -1.0
    s[:, 3] *= -1.0
    return GeodesicTrace(
        t=t.copy(),
        samples=s,
        length=leg.length,
        rtol=leg.rtol,
        atol=leg.atol,
        out_step=leg.out_step,
        assembled=True,
    )


def _glue(leg_back: GeodesicTrace, leg_fwd: GeodesicTrace) -> GeodesicTrace:
    """Concatenate the reversed backward leg with the forward leg (shared joint)."""
    rb = _reverse_leg(leg_back)
    t = np.concatenate([rb.t, rb.length + leg_fwd.t[1:]])
    samples = np.concatenate([rb.samples, leg_fwd.samples[1:]])
    return GeodesicTrace(
        t=t,
        samples=samples,
        length=rb.length + leg_fwd.length,
        rtol=leg_fwd.rtol,
        atol=leg_fwd.atol,
        out_step=leg_fwd.out_step,
        assembled=True,
    )


def _shift_x(trace: GeodesicTrace, dx: float) -> GeodesicTrace:
    s = trace.samples.copy()
    s[:, 0] += dx
    return GeodesicTrace(
        t=trace.t.copy(),
        samples=s,
        length=trace.length,
        rtol=trace.rtol,
        atol=trace.atol,
        out_step=trace.out_step,
        assembled=trace.assembled,
    )


def connect_via_turning_point(
    profile: MetricProfile,
    P: CoverPoint,
    Q: CoverPoint,
    a_turn: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    out_step: float = DEFAULT_OUT_STEP,
) -> GeodesicTrace:
    """Strip connector whose interior turning latitude sits near a_turn.

    Solves for the turning latitude y_t (log-parameterized toward a_turn) so
    that the two outward legs, integrated to the latitude events of P and Q,
    span exactly the requested x-displacement.  Returns an assembled trace
    from P to Q or raises MissingGeodesic when no such connector exists.
    """
    dX = Q.X - P.X
    sgn = 1.0 if dX >= 0 else -1.0
    adX = abs(dX)
    py, qy = P.Y, Q.Y
    side = 1.0 if py > a_turn else -1.0
    gap = min(abs(py - a_turn), abs(qy - a_turn))
    if gap <= 0:
        raise MissingGeodesic("an endpoint sits on the turning latitude")
    code, params = profile.kernel_args
    t_max = adX * _profile_max(profile) + 8.0 * (1.0 + abs(py - a_turn) + abs(qy - a_turn)) + 20.0

    def width(s):
        y_t = a_turn + side * math.exp(s)
        f, _, _ = eval_f(profile, y_t)
        st_f = np.array([0.0, y_t, sgn / f, 0.0, 0.0, 0.0])
        st_b = np.array([0.0, y_t, -sgn / f, 0.0, 0.0, 0.0])
        end_f, Lf, hit_f = _kernels.integrate_until_latitude(
            code, params, st_f, qy, t_max, rtol, atol, out_step
        )
        end_b, Lb, hit_b = _kernels.integrate_until_latitude(
            code, params, st_b, py, t_max, rtol, atol, out_step
        )
        if not (hit_f and hit_b):
            return None
        return sgn * (end_f[0] - end_b[0]), (y_t, Lf, Lb)

    s_hi = math.log(gap) - 1e-9
    s_lo = math.log(1e-300)
    w_hi = width(s_hi)
    if w_hi is None or w_hi[0] > adX:
        raise MissingGeodesic("no turning-point connector (endpoints too close)")
    lo, hi = s_lo, s_hi
    sol = None
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        wm = width(mid)
        if wm is None:
            lo = mid
            continue
        if sol is None or abs(wm[0] - adX) < abs(sol[0] - adX):
            sol = (wm[0], wm[1])
        if abs(wm[0] - adX) < 1e-12:
            break
        if wm[0] > adX:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(lo)):
            break
    if sol is None or abs(sol[0] - adX) > 1e-8:
        raise MissingGeodesic("turning-point solve did not converge")
    y_t, Lf, Lb = sol[1]

    f, _, _ = eval_f(profile, y_t)
    leg_f = integrate(
        profile, PhaseState(0.0, y_t, sgn / f, 0.0), Lf, rtol=rtol, atol=atol, out_step=out_step
    )
    leg_b = integrate(
        profile, PhaseState(0.0, y_t, -sgn / f, 0.0), Lb, rtol=rtol, atol=atol, out_step=out_step
    )
    glued = _glue(leg_b, leg_f)
    return _shift_x(glued, P.X - glued.X[0])


def connect_to_boundary(
    profile: MetricProfile,
    P: CoverPoint,
    Q: CoverPoint,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    out_step: float = DEFAULT_OUT_STEP,
) -> GeodesicTrace:
    """Strip connector ending on a boundary latitude (Q.Y on the boundary).

    The shooting unknown is the touch-down vertical velocity at Q
    (log-parameterized); the connector is integrated backward from Q to the
    latitude event of P and reversed, so the exponentially small touch-down
    slope stays a representable absolute quantity.
    """
    dX = P.X - Q.X  # displacement the backward leg must realize
    sgn = 1.0 if dX >= 0 else -1.0
    adX = abs(dX)
    code, params = profile.kernel_args
    fq, _, _ = eval_f(profile, Q.Y)
    side = 1.0 if P.Y > Q.Y else -1.0
    t_max = adX * _profile_max(profile) + 8.0 * (1.0 + abs(P.Y - Q.Y)) + 20.0

    def widthb(s):
        eta = side * math.exp(s)
        if abs(eta) >= 1.0:
            return None
        xi = sgn * math.sqrt(1.0 - eta * eta) / fq
        st = np.array([Q.X, Q.Y, xi, eta, 0.0, 0.0])
        end, L, hit = _kernels.integrate_until_latitude(
            code, params, st, P.Y, t_max, rtol, atol, out_step
        )
        if not hit:
            return None
        return sgn * (end[0] - Q.X), (L, xi, eta)

    s_hi = math.log(1.0 - 1e-12)
    s_lo = math.log(1e-300)
    w_hi = widthb(s_hi)
    if w_hi is None or w_hi[0] > adX:
        raise MissingGeodesic("no boundary connector (endpoints too close)")
    lo, hi = s_lo, s_hi
    sol = None
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        wm = widthb(mid)
        if wm is None:
            lo = mid
            continue
        if sol is None or abs(wm[0] - adX) < abs(sol[0] - adX):
            sol = (wm[0], wm[1])
        if abs(wm[0] - adX) < 1e-12:
            break
        if wm[0] > adX:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, abs(lo)):
            break
    if sol is None or abs(sol[0] - adX) > 1e-8:
        raise MissingGeodesic("boundary connector solve did not converge")
    L, xi, eta = sol[1]
    leg = integrate(
        profile, PhaseState(Q.X, Q.Y, xi, eta), L, rtol=rtol, atol=atol, out_step=out_step
    )
    return _reverse_leg(leg)
