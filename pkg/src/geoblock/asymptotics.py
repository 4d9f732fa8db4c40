"""Busemann estimates, coray residuals, admissible cylinders, excursion profiles.

The Busemann function of a ray is approximated by its monotone tail
d(p, c(t)) - t at finite horizons; no extrapolation is asserted as the limit.
Admissible cylinders are the complement components of the union of minimal
periodic geodesics in a prime class, detected at a fixed transversal
resolution.  Excursion profiles measure how long a minimal strip connector
takes to enter (and leave) an epsilon-collar of the strip boundary; their
uniform boundedness over the ladder is the checkable trace of the
boundary-hugging behaviour.
"""

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .connect import (
    HomologyClass,
    connect_to_boundary,
    connect_via_turning_point,
    cover_connect,
    is_homotopically_minimal,
    minimal_periodic,
)
from .errors import HorizonExceeded, MissingGeodesic, NotPrime
from .flow import DEFAULT_ATOL, DEFAULT_OUT_STEP, DEFAULT_RTOL, GeodesicTrace, PhaseState, integrate
from .profiles import (
    CoverPoint,
    MetricProfile,
    TorusPoint,
    circle_dist,
    eval_f,
    f_array,
    min_latitudes,
)

FOLIATION_GRID = 2048
FOLIATION_TOL = 1e-3
LATITUDE_FLATNESS = 1e-6


@dataclass
class RaySpec:
    """A forward ray: a long homotopically minimal carrier trace."""

    carrier: GeodesicTrace
    asserted_minimal: bool = True

    @property
    def horizon(self) -> float:
        return self.carrier.length

    def verify_minimal(self, profile: MetricProfile, n_segments: int = 3, seg_length: float = 1.5):
        """Spot-check minimality of subsegments of the carrier."""
        for k in range(n_segments):
            t0 = k * (self.horizon - seg_length) / max(1, n_segments - 1)
            st = self.carrier.state_at(profile, t0)
            sub = integrate(profile, st, seg_length)
            flag, _ = is_homotopically_minimal(profile, sub)
            if not flag:
                return False
        return True


def latitude_ray(profile: MetricProfile, x0: float, a: float, horizon: float = 200.0, direction: int = 1) -> RaySpec:
    """Ray running along the latitude circle y = a (requires f'(a) = 0)."""
    f, fp, _ = eval_f(profile, a)
    if abs(fp) > 1e-9:
        raise ValueError(f"latitude {a} is not a geodesic (f'(a) = {fp:.3g})")
    st = PhaseState(x0, a, direction / f, 0.0)
    return RaySpec(carrier=integrate(profile, st, horizon, out_step=0.1))


def _is_min_latitude_ray(profile, ray):
    Y = ray.carrier.Y
    a = Y[0]
    if np.max(np.abs(Y - a)) > 1e-9:
        return None
    lats, fmin = min_latitudes(profile)
    f, _, _ = eval_f(profile, a)
    if f > fmin + 1e-9:
        return None
    return a


def busemann_estimate(profile: MetricProfile, ray: RaySpec, p, t: float) -> float:
    """d(p, c(t)) - t at horizon t, with d computed in the universal cover.

    p may be a TorusPoint (canonical lift) or a CoverPoint (used as given).
    The estimate is monotone non-increasing in t up to integration accuracy.
    """
    if t > ray.horizon + 1e-9:
        raise HorizonExceeded(f"t = {t} beyond ray horizon {ray.horizon}")
    P = p.lift() if isinstance(p, TorusPoint) else p
    T = ray.carrier.state_at(profile, t).pos
    if profile.kind == "flat":
        return math.hypot(T.X - P.X, T.Y - P.Y) - t
    a = _is_min_latitude_ray(profile, ray)
    if a is not None:
        f, _, _ = eval_f(profile, a)
        if abs(P.Y - a) < 1e-12:
            return f * abs(T.X - P.X) - t
        d = connect_to_boundary(profile, P, T).length
        return d - t
    # general ray: desk-scale fallback through the targeted mini-enumeration
    return cover_connect(profile, P, T).length - t


def coray_residual(
    profile: MetricProfile, ray: RaySpec, candidate: GeodesicTrace, s: float, t: float
) -> float:
    """|B(candidate(t)) - B(candidate(s)) - (s - t)| at the ray horizon.

    Vanishing residual (as the horizon grows) is the numerical coray
    criterion; the residual of the ray against itself is zero to integration
    accuracy.
    """
    if not (0.0 <= s < t <= candidate.length + 1e-12):
        raise ValueError("need 0 <= s < t <= candidate length")
    H = ray.horizon
    ps = candidate.state_at(profile, s).pos
    pt = candidate.state_at(profile, t).pos
    bs = busemann_estimate(profile, ray, ps, H)
    bt = busemann_estimate(profile, ray, pt, H)
    return abs(bt - bs - (s - t))


# ----------------------------------------------------------------------------
# admissible cylinders
# ----------------------------------------------------------------------------


@dataclass
class AdmissibleCylinder:
    """A complement component of the minimal-periodic union, with its boundary.

    a_low/a_high are the boundary latitudes in strip coordinates
    (a_high = a_low + span, so for a single boundary geodesic a_high is the
    next lift: e.g. (0, 1) for the complement of one latitude minimizer).
    """

    a_low: float
    a_high: float
    klass: HomologyClass
    boundary_traces: tuple
    latitude_boundaries: bool = True

    @property
    def span(self) -> float:
        return self.a_high - self.a_low

    @property
    def generator(self) -> HomologyClass:
        """Prime vector generating the stabilizer of the strip."""
        return self.klass

    def strip_y(self, p) -> float:
        """Map a point into strip coordinates y in [a_low, a_low + 1).

        Points within rounding of the boundary snap to the a_low copy.
        """
        y = p.y if isinstance(p, TorusPoint) else p.Y
        r = (y - self.a_low) % 1.0
        if r > 1.0 - 1e-9 or r < 1e-9:
            r = 0.0
        return self.a_low + r

    def contains(self, p, closed: bool = True) -> bool:
        y = self.strip_y(p)
        if closed:
            return self.a_low - 1e-12 <= y <= self.a_high + 1e-12
        return self.a_low + 1e-12 < y < self.a_high - 1e-12

    def boundary_distance(self, y_strip: float) -> float:
        """Distance to the strip boundary for latitude-bounded cylinders (exact)."""
        return max(0.0, min(y_strip - self.a_low, self.a_high - y_strip))

    def on_boundary(self, p, tol: float = 1e-9) -> bool:
        y = self.strip_y(p)
        return min(abs(y - self.a_low), abs(self.a_high - y)) <= tol


def _trace_transversal(trace: GeodesicTrace, h: HomologyClass) -> float:
    w = np.array([-h.n, h.m], dtype=float)
    pts = np.stack([trace.X, trace.Y], axis=1)
    tau = pts @ w / (w @ w)
    return float(np.mean(tau) % 1.0)


def _cover_with_trace(profile, covered, trace, h, grid, cover_tol):
    """Mark gridpoints within cover_tol of the trace; returns how many were new."""
    code, params = profile.kernel_args
    w = np.array([-h.n, h.m], dtype=float)
    newly = 0
    for j in range(grid):
        if covered[j]:
            continue
        gx, gy = (j / grid) * w
        d2, _ = _kernels.polyline_min_dist2_to_point(code, params, trace.X, trace.Y, gx, gy, True)
        if d2 <= cover_tol**2:
            covered[j] = True
            newly += 1
    return newly


def detect_cylinders(
    profile: MetricProfile,
    h: HomologyClass,
    n_seed: int = 32,
    seed: int = 0,
    grid: int = FOLIATION_GRID,
    max_probes: int = 4096,
) -> list:
    """Admissible cylinders: complement components of the minimal-trace union.

    Runs minimal_periodic, then walks the transversal circle at `grid`
    resolution; every uncovered gap is probed by re-running curve shortening
    seeded inside it.  A probe that produces a new global minimizer through
    the gap refines the coverage; a probe that collapses onto the known
    minimizers confirms the gap as a cylinder.  Returns [] when the
    minimizers cover the circle at resolution (the foliated case).
    """
    if not h.is_prime():
        raise NotPrime(f"class ({h.m}, {h.n}) is not prime")
    from .connect import _shorten_loop

    traces = minimal_periodic(profile, h, n_seed=n_seed, seed=seed)
    lmin = min(tr.length for tr in traces)
    # Rotations x -> x + s are isometries of every profile metric, so a
    # non-latitude minimizer comes with its whole rotation family: the family
    # sweeps the torus and the class is foliated.  Only rotation-invariant
    # (latitude-circle) minimizers can leave complement components.
    if any(_latitude_value(tr, profile) is None for tr in traces):
        return []
    w = np.array([-h.n, h.m], dtype=float)
    # coarser grids need a matching collar so each new minimizer makes progress
    cover_tol = max(FOLIATION_TOL, 1.5 / grid)

    covered = np.zeros(grid, dtype=bool)
    for tr in traces:
        _cover_with_trace(profile, covered, tr, h, grid, cover_tol)

    confirmed_gaps = []
    strikes = {}
    probes = 0
    while probes < max_probes:
        gaps = _uncovered_runs(covered)
        gaps = [g for g in gaps if not _gap_known(g, confirmed_gaps, grid)]
        if not gaps:
            break
        j0, j1 = gaps[0]
        span = (j1 - j0) % grid
        # probe the midpoint first, then the quartiles before giving up on a gap
        attempt = strikes.get((j0, j1), 0)
        frac = (0.5, 0.25, 0.75)[min(attempt, 2)]
        mid = ((j0 + span * frac) % grid) / grid
        base = mid * w
        probes += 1
        progress = False
        res = _shorten_loop(profile, base, h)
        if res is not None:
            st, L = res
            if L <= lmin + 1e-6:
                tr = integrate(profile, st, L)
                # a minimizer is new evidence only if it covers fresh gridpoints
                if _cover_with_trace(profile, covered, tr, h, grid, cover_tol) > 0:
                    traces.append(tr)
                    lmin = min(lmin, L)
                    progress = True
                    strikes.clear()
        if not progress:
            strikes[(j0, j1)] = attempt + 1
            if strikes[(j0, j1)] >= 3:
                confirmed_gaps.append((j0, j1))

    cylinders = []
    taus = sorted((_trace_transversal(tr, h), i) for i, tr in enumerate(traces))
    for j0, j1 in confirmed_gaps:
        g_lo = j0 / grid
        g_hi = j1 / grid
        lo_tau, lo_i = _nearest_below(taus, g_lo)
        hi_tau, hi_i = _nearest_above(taus, g_hi)
        t_lo, t_hi = traces[lo_i], traces[hi_i]
        lat_lo = _latitude_value(t_lo, profile)
        lat_hi = _latitude_value(t_hi, profile)
        if lat_lo is not None and lat_hi is not None:
            a_low = lat_lo
            a_high = lat_hi if lat_hi > lat_lo + 1e-9 else lat_hi + 1.0
            cylinders.append(
                AdmissibleCylinder(
                    a_low=a_low,
                    a_high=a_high,
                    klass=h,
                    boundary_traces=(t_lo, t_hi),
                    latitude_boundaries=True,
                )
            )
        else:
            a_high = hi_tau if hi_tau > lo_tau + 1e-9 else hi_tau + 1.0
            cylinders.append(
                AdmissibleCylinder(
                    a_low=lo_tau,
                    a_high=a_high,
                    klass=h,
                    boundary_traces=(t_lo, t_hi),
                    latitude_boundaries=False,
                )
            )
    cylinders.sort(key=lambda c: c.a_low)
    return cylinders


def _latitude_value(trace: GeodesicTrace, profile: MetricProfile = None):
    y0 = float(np.mean(trace.Y))
    if np.max(np.abs(trace.Y - y0)) >= LATITUDE_FLATNESS:
        return None
    if profile is not None:
        # snap to the exact critical latitude: downstream strip shooting is
        # exponentially sensitive to an offset of the boundary value
        y = y0
        for _ in range(6):
            f, fp, fpp = eval_f(profile, y)
            if fpp == 0.0 or fp == 0.0:
                break
            y -= fp / fpp
        if abs(y - y0) < LATITUDE_FLATNESS:
            y0 = y
    return y0 % 1.0


def _uncovered_runs(covered):
    grid = len(covered)
    unc = ~covered
    if not unc.any():
        return []
    if unc.all():
        return [(0, grid - 1)]
    runs = []
    j = 0
    while j < grid:
        if unc[j] and not unc[j - 1]:
            k = j
            while unc[k % grid]:
                k += 1
            runs.append((j, (k - 1) % grid))
            j = k
        else:
            j += 1
    return runs


def _gap_known(gap, confirmed, grid):
    j0, j1 = gap
    mid = (j0 + ((j1 - j0) % grid) / 2.0) % grid
    for c0, c1 in confirmed:
        span = (c1 - c0) % grid
        if (mid - c0) % grid <= span:
            return True
    return False


def _nearest_below(taus, g):
    best = None
    for tau, i in taus:
        for shift in (-1.0, 0.0):
            v = tau + shift
            if v <= g + 1e-12 and (best is None or v > best[0]):
                best = (v, i)
    if best is None:
        tau, i = taus[-1]
        best = (tau - 1.0, i)
    return best


def _nearest_above(taus, g):
    best = None
    for tau, i in taus:
        for shift in (0.0, 1.0):
            v = tau + shift
            if v >= g - 1e-12 and (best is None or v < best[0]):
                best = (v, i)
    if best is None:
        tau, i = taus[0]
        best = (tau + 1.0, i)
    return best


# ----------------------------------------------------------------------------
# strip connectors and excursion profiles
# ----------------------------------------------------------------------------


def strip_connect(profile: MetricProfile, cyl: AdmissibleCylinder, P: CoverPoint, Q: CoverPoint) -> GeodesicTrace:
    """Minimal joining geodesic between strip points (boundary-aware shooting).

    Interior-to-interior connectors are solved through a turning latitude near
    either boundary (taking the shorter); connectors ending on the boundary go
    through the touch-down formulation.  Short connectors additionally try
    plain angle shooting and the overall shortest candidate wins.
    """
    if not cyl.latitude_boundaries:
        raise MissingGeodesic("strip connectors require latitude boundaries")
    candidates = []
    q_on_boundary = min(abs(Q.Y - cyl.a_low), abs(cyl.a_high - Q.Y)) < 1e-9
    if q_on_boundary:
        Qb = CoverPoint(Q.X, cyl.a_low if abs(Q.Y - cyl.a_low) < abs(cyl.a_high - Q.Y) else cyl.a_high)
        try:
            candidates.append(connect_to_boundary(profile, P, Qb))
        except MissingGeodesic:
            pass
    else:
        for a_turn in (cyl.a_low, cyl.a_high):
            try:
                candidates.append(connect_via_turning_point(profile, P, Q, a_turn))
            except MissingGeodesic:
                pass
    fmax = float(np.max(f_array(profile, np.linspace(0, 1, 256, endpoint=False))))
    chord = math.hypot(fmax * (Q.X - P.X), Q.Y - P.Y)
    if chord < 3.0:
        try:
            jg = cover_connect(profile, P, Q)
            candidates.append(jg.trace)
        except MissingGeodesic:
            pass
    candidates = [c for c in candidates if _stays_in_strip(c, cyl)]
    if not candidates:
        raise MissingGeodesic("no strip connector found")
    return min(candidates, key=lambda c: c.length)


def _stays_in_strip(trace: GeodesicTrace, cyl: AdmissibleCylinder) -> bool:
    return bool(
        np.all(trace.Y >= cyl.a_low - 1e-9) and np.all(trace.Y <= cyl.a_high + 1e-9)
    )


@dataclass
class ExcursionRecord:
    n: int
    length: float
    eps: float
    entry: float
    exit: float
    maxdist: float

    @property
    def empirical_T(self) -> float:
        return max(self.entry, self.length - self.exit)


@dataclass
class ExcursionProfile:
    """Boundary-collar sojourn data for a ladder of strip connectors."""

    records: list
    one_sided: bool = False

    def empirical_T(self, eps: float) -> float:
        vals = [r.empirical_T for r in self.records if r.eps == eps]
        return max(vals) if vals else float("nan")

    def by_n(self, eps: float) -> dict:
        return {r.n: r.empirical_T for r in self.records if r.eps == eps}

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("n,L_n,eps,entry,exit,maxdist\n")
        for r in self.records:
            buf.write(f"{r.n},{r.length!r},{r.eps!r},{r.entry!r},{r.exit!r},{r.maxdist!r}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _sojourn(trace: GeodesicTrace, cyl: AdmissibleCylinder, eps: float, one_sided: bool):
    """(entry, exit) of the final eps-collar sojourn and the max boundary distance."""
    d = np.array([cyl.boundary_distance(y) for y in trace.Y])
    interior = slice(1, -1) if len(d) > 2 else slice(None)
    maxdist = float(np.max(d[interior]))
    viol = d > eps
    t = trace.t
    L = trace.length
    half = L / 2.0
    if one_sided:
        # no exit requirement: T is the last time the collar is violated at all
        entry = max((tt for tt, v in zip(t, viol) if v), default=0.0)
        return float(entry), float(L), maxdist
    entry = max((tt for tt, v in zip(t, viol) if v and tt <= half), default=0.0)
    exit_t = min((tt for tt, v in zip(t, viol) if v and tt > half), default=L)
    if entry > exit_t:
        entry = exit_t = half
    return float(entry), float(exit_t), maxdist


def excursion_profile(
    profile: MetricProfile,
    cyl: AdmissibleCylinder,
    p: TorusPoint,
    q: TorusPoint,
    n_range,
    eps_grid,
    connectors: dict = None,
) -> ExcursionProfile:
    """Entry/exit times of the eps-collar for the ladder of strip connectors.

    For each n a minimal joining geodesic from p to the lift q + n*k is
    required (MissingGeodesic otherwise); pass precomputed connectors to skip
    the solves.  The empirical T(eps) is the sup over n of
    max(entry, L_n - exit).
    """
    if not cyl.contains(p, closed=True) or not cyl.contains(q, closed=True):
        raise ValueError("endpoints must lie in the cylinder closure")
    k = cyl.generator
    P = CoverPoint(p.x, cyl.strip_y(p))
    one_sided = cyl.on_boundary(q)
    records = []
    for n in n_range:
        if connectors is not None and n in connectors:
            tr = connectors[n]
        else:
            Q = CoverPoint(q.x + n * k.m, cyl.strip_y(q) + n * k.n)
            tr = strip_connect(profile, cyl, P, Q)
        for eps in eps_grid:
            entry, exit_t, maxdist = _sojourn(tr, cyl, eps, one_sided)
            records.append(
                ExcursionRecord(
                    n=int(n), length=tr.length, eps=float(eps),
                    entry=entry, exit=exit_t, maxdist=maxdist,
                )
            )
    return ExcursionProfile(records=records, one_sided=one_sided)
