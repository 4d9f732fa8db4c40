"""Blocking sets, midpoint analysis, insecurity certificates, G-diagnostics.

A pair on the distinguished latitude of a reflection-symmetric profile is
blocked by the fixed points of the product involution (x-reflection swapping
the pair times the y-reflection fixing the latitude).  verify_blocking checks
that construction against an enumerated inventory of joining geodesics, up to
a stated length scale; "secure at scale" is evidence, never proof, and every
report carries its Lmax and passage tolerance.

The insecurity certificate instantiates the four sufficient conditions for a
pair to be unblockable: joining geodesics of unboundedly growing length that
avoid a closed set, carry no conjugate points, and spend all but a bounded
amount of time in every collar of that set.  escape_test then defeats any
finite candidate blocking set with a geodesic from the certified ladder.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .asymptotics import AdmissibleCylinder, ExcursionProfile, excursion_profile, strip_connect
from .connect import HomologyClass, enumerate_joining, minimal_periodic
from .errors import HypothesisViolated, MissingGeodesic, NotPrime, TangencyDetected
from .flow import GeodesicTrace, has_conjugate_points, monodromy
from .profiles import CoverPoint, MetricProfile, TorusPoint, circle_dist, eval_f, f_array, min_latitudes

BLOCK_DELTA = 1e-4
MIDPOINT_CLUSTER = 1e-5
SYMMETRY_TOL = 1e-9


# ----------------------------------------------------------------------------
# involutions and blocking verification
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Involution:
    """The product of the x-reflection swapping p,q with the y-reflection at a."""

    r: float
    a: float

    @property
    def fixed_points(self):
        return (
            TorusPoint(self.r, self.a),
            TorusPoint(self.r + 0.5, self.a),
            TorusPoint(self.r, self.a + 0.5),
            TorusPoint(self.r + 0.5, self.a + 0.5),
        )

    def apply(self, p: TorusPoint) -> TorusPoint:
        return TorusPoint(2.0 * self.r - p.x, 2.0 * self.a - p.y)

    def differential(self) -> np.ndarray:
        """Pushforward matrix; -Id identically for this coordinate reflection."""
        return -np.eye(2)


def check_reflection_hypotheses(profile: MetricProfile, a: float, tol: float = SYMMETRY_TOL):
    """Unique minimum at a and sigma_a-invariance of f, or HypothesisViolated."""
    f_a, fp_a, _ = eval_f(profile, a)
    lats, fmin = min_latitudes(profile)
    if f_a > fmin + tol:
        raise HypothesisViolated(f"f({a}) = {f_a:.12g} is not the minimum {fmin:.12g}")
    if len(lats) != 1:
        raise HypothesisViolated(f"profile has {len(lats)} global minima; need a unique one")
    s = np.linspace(0.0, 0.5, 2048)
    gap = np.max(np.abs(f_array(profile, a + s) - f_array(profile, a - s)))
    if gap > tol:
        raise HypothesisViolated(f"f is not reflection-symmetric about {a} (gap {gap:.3g})")


def involution_for_pair(profile: MetricProfile, a: float, p: float, q: float) -> Involution:
    """Involution for a pair of x-circle points on the latitude y = a.

    r is the midpoint (p+q)/2; the other midpoint r + 1/2 yields the same
    fixed-point set.  The profile must have its unique minimum at a and be
    reflection-symmetric there.
    """
    check_reflection_hypotheses(profile, a)
    r = ((p + q) / 2.0) % 1.0
    return Involution(r=r, a=a % 1.0)


def _sampled_torus_dist(profile, trace: GeodesicTrace, b: TorusPoint) -> np.ndarray:
    dx = trace.X - b.x
    dx -= np.round(dx)
    dy = trace.Y - b.y
    dy -= np.round(dy)
    fv = f_array(profile, trace.Y)
    return np.hypot(fv * dx, dy)


def _min_dist_to_point(
    profile,
    trace: GeodesicTrace,
    b: TorusPoint,
    refine_below: float = 0.05,
    early_exit: float = 0.0,
):
    """(t*, d*) minimizing the torus distance from the trace to b.

    Every sampled local minimum below refine_below is refined (the global
    sampled minimum can belong to a shallow boundary-hugging pass while a
    deeper transversal passage hides between samples).  Refinement is a
    parabolic fit of d^2 through the bracketing samples plus one evaluation;
    a result below early_exit returns immediately.
    """
    d = _sampled_torus_dist(profile, trace, b)
    n = len(d)
    i0 = int(np.argmin(d))
    tbest, dbest = float(trace.t[i0]), float(d[i0])
    if dbest >= refine_below:
        return tbest, dbest
    is_min = np.ones(n, dtype=bool)
    is_min[1:] &= d[1:] <= d[:-1]
    is_min[:-1] &= d[:-1] <= d[1:]
    cand = [i for i in np.nonzero(is_min)[0] if d[i] < refine_below]
    cand.sort(key=lambda i: d[i])
    for i in cand:
        if 0 < i < n - 1:
            t0, t1, t2 = trace.t[i - 1], trace.t[i], trace.t[i + 1]
            y0, y1, y2 = d[i - 1] ** 2, d[i] ** 2, d[i + 1] ** 2
            denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
            if denom != 0.0:
                aq = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
                bq = (t2 * t2 * (y0 - y1) + t1 * t1 * (y2 - y0) + t0 * t0 * (y1 - y2)) / denom
                if aq > 0:
                    tc = max(t0, min(t2, -bq / (2.0 * aq)))
                    dc = _point_dist(profile, trace, tc, b)
                    if dc < dbest:
                        tbest, dbest = float(tc), float(dc)
        else:
            if d[i] < dbest:
                tbest, dbest = float(trace.t[i]), float(d[i])
        if dbest <= early_exit:
            return tbest, dbest
    return tbest, dbest


def _point_dist(profile, trace, t, b: TorusPoint):
    st = trace.state_at(profile, t)
    code, params = profile.kernel_args
    dx = (st.x - b.x) - round(st.x - b.x)
    dy = (st.y - b.y) - round(st.y - b.y)
    f, _, _ = _kernels.f_eval(code, params, st.y)
    return math.sqrt(f * f * dx * dx + dy * dy)


@dataclass
class BlockingVerdict:
    geodesic: "object"
    blocked: bool
    blocker: TorusPoint = None
    t_param: float = float("nan")
    distance: float = float("nan")


@dataclass
class SecurityReport:
    """Joining-geodesic inventory plus a blocking verdict with evidence."""

    p: TorusPoint
    q: TorusPoint
    candidates: tuple
    verdicts: list
    max_length: float
    delta: float
    n_sweep: int

    @property
    def verdict(self) -> str:
        return "BLOCKED_AT_SCALE" if all(v.blocked for v in self.verdicts) else "UNBLOCKED_WITNESSES"

    @property
    def witnesses(self) -> list:
        return [v for v in self.verdicts if not v.blocked]

    @property
    def caveat(self) -> str:
        return (
            f"blocking verified only for the {len(self.verdicts)} geodesics enumerated up to "
            f"length {self.max_length} at passage tolerance {self.delta}; security quantifies "
            "over all lengths and is not certified by this report"
        )

    def to_dict(self) -> dict:
        return {
            "pair": {"p": [self.p.x, self.p.y], "q": [self.q.x, self.q.y]},
            "candidate_blocking_set": [[b.x, b.y] for b in self.candidates],
            "max_length": self.max_length,
            "delta": self.delta,
            "n_sweep": self.n_sweep,
            "verdict": self.verdict,
            "caveat": self.caveat,
            "geodesics": [
                {
                    **v.geodesic.record(),
                    "blocked": v.blocked,
                    "blocker": None if v.blocker is None else [v.blocker.x, v.blocker.y],
                    "t_param": v.t_param,
                    "block_distance": v.distance,
                }
                for v in self.verdicts
            ],
        }


def verify_blocking(
    profile: MetricProfile,
    p: TorusPoint,
    q: TorusPoint,
    candidates,
    max_length: float,
    delta: float = BLOCK_DELTA,
    n_sweep: int = 4096,
    inventory=None,
) -> SecurityReport:
    """Check whether every enumerated joining geodesic passes through a candidate.

    A geodesic is blocked when its interior comes within delta of some
    candidate point (refined by local minimization in t).  Candidate points
    within delta of p or q are rejected up front.
    """
    candidates = tuple(candidates)
    for b in candidates:
        for endpoint in (p, q):
            dx = circle_dist(b.x, endpoint.x)
            dy = circle_dist(b.y, endpoint.y)
            if math.hypot(dx, dy) <= delta:
                raise ValueError(f"candidate {b} lies within delta of an endpoint")
    if inventory is None:
        inventory = enumerate_joining(profile, p, q, max_length, n_sweep=n_sweep)
    verdicts = []
    for jg in inventory:
        best = None
        for b in candidates:
            t, d = _min_dist_to_point(profile, jg.trace, b, early_exit=0.5 * delta)
            if best is None or d < best[1]:
                best = (t, d, b)
            if d < 0.5 * delta:
                break
        if best is not None and best[1] < delta:
            verdicts.append(
                BlockingVerdict(geodesic=jg, blocked=True, blocker=best[2], t_param=best[0], distance=best[1])
            )
        else:
            verdicts.append(
                BlockingVerdict(
                    geodesic=jg,
                    blocked=False,
                    blocker=None,
                    t_param=float("nan"),
                    distance=float("nan") if best is None else best[1],
                )
            )
    return SecurityReport(
        p=p, q=q, candidates=candidates, verdicts=verdicts,
        max_length=max_length, delta=delta, n_sweep=n_sweep,
    )


@dataclass
class MidpointCluster:
    center: TorusPoint
    members: list


def midpoint_analysis(
    profile: MetricProfile,
    p: TorusPoint,
    q: TorusPoint,
    max_length: float,
    n_sweep: int = 4096,
    cluster_tol: float = MIDPOINT_CLUSTER,
    inventory=None,
):
    """Midpoints (trace points at t = L/2) of all enumerated joining geodesics.

    Returns (pairs, clusters) where pairs is a list of (geodesic, midpoint)
    and clusters groups the midpoints by torus distance.  A cluster count
    that keeps growing with max_length is midpoint-insecurity evidence.
    """
    if inventory is None:
        inventory = enumerate_joining(profile, p, q, max_length, n_sweep=n_sweep)
    pairs = []
    for jg in inventory:
        st = jg.trace.state_at(profile, jg.length / 2.0)
        pairs.append((jg, TorusPoint(st.x, st.y)))
    clusters = []
    for jg, mp in pairs:
        placed = False
        for cl in clusters:
            dx = circle_dist(mp.x, cl.center.x)
            dy = circle_dist(mp.y, cl.center.y)
            f, _, _ = eval_f(profile, cl.center.y)
            if math.sqrt(f * f * dx * dx + dy * dy) <= cluster_tol:
                cl.members.append((jg, mp))
                placed = True
                break
        if not placed:
            clusters.append(MidpointCluster(center=mp, members=[(jg, mp)]))
    return pairs, clusters


# ----------------------------------------------------------------------------
# insecurity certificates
# ----------------------------------------------------------------------------


@dataclass
class InsecurityCertificate:
    """Evidence ladder for the four insecurity conditions of a pair in a cylinder."""

    p: TorusPoint
    q: TorusPoint
    cylinder: AdmissibleCylinder
    connectors: dict
    lengths: dict
    min_boundary_dist: dict
    conjugate_flags: dict
    excursions: ExcursionProfile
    cond_a: bool
    cond_b: bool
    cond_c: bool
    cond_d: bool
    one_sided: bool
    eps_grid: tuple

    @property
    def valid(self) -> bool:
        return self.cond_a and self.cond_b and self.cond_c and self.cond_d

    @property
    def n_values(self):
        return sorted(self.connectors)

    def to_dict(self) -> dict:
        ns = self.n_values
        return {
            "pair": {"p": [self.p.x, self.p.y], "q": [self.q.x, self.q.y]},
            "cylinder": {
                "a_low": self.cylinder.a_low,
                "a_high": self.cylinder.a_high,
                "class": list(self.cylinder.klass.as_tuple()),
            },
            "one_sided": self.one_sided,
            "eps_grid": list(self.eps_grid),
            "n": ns,
            "lengths": [self.lengths[n] for n in ns],
            "min_boundary_dist": [self.min_boundary_dist[n] for n in ns],
            "conjugate_free": [not self.conjugate_flags[n] for n in ns],
            "excursion": [
                {
                    "n": r.n,
                    "eps": r.eps,
                    "entry": r.entry,
                    "exit": r.exit,
                    "maxdist": r.maxdist,
                    "T": r.empirical_T,
                }
                for r in self.excursions.records
            ],
            "conditions": {
                "a_lengths_increasing": self.cond_a,
                "b_interior_avoids_boundary": self.cond_b,
                "c_no_conjugate_points": self.cond_c,
                "d_excursion_bounded": self.cond_d,
            },
            "verdict": "VALID" if self.valid else "INVALID",
        }


def insecurity_certificate(
    profile: MetricProfile,
    cyl: AdmissibleCylinder,
    p: TorusPoint,
    q: TorusPoint,
    n_max: int = 8,
    eps_grid=(0.02, 0.05, 0.1),
    gap_margin: float = 1e-6,
) -> InsecurityCertificate:
    """Build the ladder of strip connectors and evaluate the four conditions.

    (a) lengths strictly increasing with gaps above gap_margin; (b) interiors
    keep a positive distance to the cylinder boundary; (c) no conjugate
    points on [0, L_n); (d) the empirical collar-entry time T(eps) stays
    bounded along the ladder (the top half within twice its midpoint value).
    """
    if not cyl.contains(p, closed=False):
        raise ValueError("p must lie in the open cylinder")
    if not cyl.contains(q, closed=True):
        raise ValueError("q must lie in the cylinder closure")
    k = cyl.generator
    P = CoverPoint(p.x, cyl.strip_y(p))
    one_sided = cyl.on_boundary(q)
    connectors = {}
    for n in range(1, n_max + 1):
        Q = CoverPoint(q.x + n * k.m, cyl.strip_y(q) + n * k.n)
        connectors[n] = strip_connect(profile, cyl, P, Q)

    lengths = {n: connectors[n].length for n in connectors}
    ns = sorted(connectors)
    gaps = [lengths[b] - lengths[a] for a, b in zip(ns, ns[1:])]
    cond_a = all(g > gap_margin for g in gaps) if gaps else True

    min_bd = {}
    for n in ns:
        tr = connectors[n]
        sel = (tr.t > 1e-12) & (tr.t < tr.length - 1e-12)
        if one_sided:
            sel &= tr.t < tr.length - 10 * tr.out_step
        d = np.array([cyl.boundary_distance(y) for y in tr.Y[sel]])
        min_bd[n] = float(np.min(d)) if len(d) else float("nan")
    cond_b = all(min_bd[n] > 0.0 for n in ns)

    conj = {}
    for n in ns:
        flag, _ = has_conjugate_points(profile, connectors[n])
        conj[n] = flag
    cond_c = not any(conj.values())

    exc = excursion_profile(profile, cyl, p, q, ns, eps_grid, connectors=connectors)
    cond_d = True
    n_half = max(1, n_max // 2)
    for eps in eps_grid:
        byn = exc.by_n(eps)
        t_half = byn.get(n_half, float("nan"))
        upper = [byn[n] for n in byn if n >= n_half]
        if not upper or not math.isfinite(t_half):
            cond_d = False
            break
        if max(upper) > 2.0 * t_half + 1e-9:
            cond_d = False
            break

    return InsecurityCertificate(
        p=p,
        q=q,
        cylinder=cyl,
        connectors=connectors,
        lengths=lengths,
        min_boundary_dist=min_bd,
        conjugate_flags=conj,
        excursions=exc,
        cond_a=cond_a,
        cond_b=cond_b,
        cond_c=cond_c,
        cond_d=cond_d,
        one_sided=one_sided,
        eps_grid=tuple(eps_grid),
    )


def escape_test(
    profile: MetricProfile,
    certificate: InsecurityCertificate,
    candidates,
    delta: float = 1e-3,
):
    """First ladder geodesic whose interior stays delta away from every candidate.

    Returns (n, trace) for the witness, or None when the ladder is exhausted
    (the caller should raise n_max).  Candidates within delta of the pair are
    rejected.
    """
    candidates = tuple(candidates)
    for b in candidates:
        for endpoint in (certificate.p, certificate.q):
            if math.hypot(circle_dist(b.x, endpoint.x), circle_dist(b.y, endpoint.y)) <= delta:
                raise ValueError(f"candidate {b} lies within delta of the pair")
    for n in certificate.n_values:
        tr = certificate.connectors[n]
        clear = True
        for b in candidates:
            t, d = _min_dist_to_point(profile, tr, b)
            if d < delta and 1e-9 < t < tr.length - 1e-9:
                clear = False
                break
        if clear:
            return n, tr
    return None


# ----------------------------------------------------------------------------
# intersection counts
# ----------------------------------------------------------------------------


def intersection_count(profile: MetricProfile, trace1: GeodesicTrace, trace2: GeodesicTrace, tangency_tol: float = 1e-6):
    """Crossings of two periodic traces on the torus: (count, signed_sum, points).

    Crossing points are located by segment-pair intersection over the sampled
    polylines (with lattice translates of the second trace) and the
    orientation sign is evaluated from the crossing directions.  A crossing
    angle below tangency_tol radians raises TangencyDetected.
    """
    A = np.stack([trace1.X, trace1.Y], axis=1)
    B = np.stack([trace2.X, trace2.Y], axis=1)
    pts = []
    signs = []
    lo = np.floor(A.min(axis=0)) - np.ceil(np.maximum(B.max(axis=0) - B.min(axis=0), 1.0)) - 1
    hi = np.ceil(A.max(axis=0)) + 1
    for di in range(int(lo[0]), int(hi[0]) + 1):
        for dj in range(int(lo[1]), int(hi[1]) + 1):
            Bs = B + np.array([di, dj])
            _segment_crossings(A, Bs, pts, signs, tangency_tol)
    # dedup crossing points on the torus
    uniq = []
    usigns = []
    for (x, y), s in zip(pts, signs):
        xt, yt = x % 1.0, y % 1.0
        if all(
            math.hypot(circle_dist(xt, ux), circle_dist(yt, uy)) > 1e-9 for ux, uy in uniq
        ):
            uniq.append((xt, yt))
            usigns.append(s)
    return len(uniq), int(sum(usigns)), [TorusPoint(x, y) for x, y in uniq]


def _segment_crossings(A, B, pts, signs, tangency_tol):
    # proper intersections between polyline segments, half-open at the far end
    for i in range(len(A) - 1):
        p0 = A[i]
        d1 = A[i + 1] - p0
        for j in range(len(B) - 1):
            q0 = B[j]
            d2 = B[j + 1] - q0
            denom = d1[0] * d2[1] - d1[1] * d2[0]
            rel = q0 - p0
            if denom == 0.0:
                continue
            s = (rel[0] * d2[1] - rel[1] * d2[0]) / denom
            t = (rel[0] * d1[1] - rel[1] * d1[0]) / denom
            if -1e-12 <= s < 1.0 - 1e-12 and -1e-12 <= t < 1.0 - 1e-12:
                n1 = math.hypot(*d1)
                n2 = math.hypot(*d2)
                sinang = abs(denom) / (n1 * n2)
                if sinang < tangency_tol:
                    raise TangencyDetected(
                        f"crossing angle {sinang:.2e} rad below tolerance {tangency_tol:.0e}"
                    )
                pts.append(tuple(p0 + s * d1))
                signs.append(1 if denom > 0 else -1)


# ----------------------------------------------------------------------------
# (G1)/(G2)/(G3) diagnostics
# ----------------------------------------------------------------------------


@dataclass
class ClassDiagnostic:
    klass: HomologyClass
    n_minimizers: int
    min_length: float
    n_cylinders: int = None  # None when not probed (G1 already settled)
    monodromy_eigs: tuple = None


@dataclass
class GConditionsReport:
    rows: list
    g1: bool
    g1_witness: tuple = None
    g2: bool = False
    g2_pair: tuple = None
    g3: bool = False
    resolution_note: str = ""

    def to_dict(self) -> dict:
        return {
            "classes": [
                {
                    "class": list(r.klass.as_tuple()),
                    "n_minimizers": r.n_minimizers,
                    "min_length": r.min_length,
                    "n_cylinders": r.n_cylinders,
                    "monodromy_eigs": None
                    if r.monodromy_eigs is None
                    else [[z.real, z.imag] for z in r.monodromy_eigs],
                }
                for r in self.rows
            ],
            "G1": self.g1,
            "G1_witness": None if self.g1_witness is None else list(self.g1_witness),
            "G2": self.g2,
            "G2_pair": None if self.g2_pair is None else [list(h) for h in self.g2_pair],
            "G3": self.g3,
            "note": self.resolution_note,
        }


def g_conditions(
    profile: MetricProfile,
    classes=((1, 0), (0, 1), (1, 1), (1, -1)),
    seed: int = 0,
    n_seed: int = 16,
    grid: int = 2048,
) -> GConditionsReport:
    """Resolution-bounded diagnostics for the three structural conditions.

    G1: some scanned class leaves admissible cylinders (checked until the
    first witness).  G2: a scanned pair with |h1.h2| = 1 has unique minimal
    periodic geodesics on both sides.  G3: additionally, both monodromies
    keep their eigenvalues away from 1 by 1e-6.  Uniqueness means "exactly
    one cluster at the dedup resolution"; the report says so.
    """
    from .asymptotics import detect_cylinders

    hs = [HomologyClass(m, n) for (m, n) in classes]
    rows = []
    g1 = False
    g1_witness = None
    for h in hs:
        mps = minimal_periodic(profile, h, n_seed=n_seed, seed=seed)
        row = ClassDiagnostic(klass=h, n_minimizers=len(mps), min_length=mps[0].length)
        if len(mps) == 1:
            try:
                M = monodromy(profile, mps[0])
                row.monodromy_eigs = tuple(np.linalg.eigvals(M))
            except Exception:
                row.monodromy_eigs = None
        if not g1:
            cyls = detect_cylinders(profile, h, n_seed=max(n_seed, 32), seed=seed, grid=grid)
            row.n_cylinders = len(cyls)
            if cyls:
                g1 = True
                g1_witness = h.as_tuple()
        rows.append(row)

    g2 = False
    g3 = False
    g2_pair = None
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            hi, hj = rows[i].klass, rows[j].klass
            if abs(hi.dot(hj)) != 1:
                continue
            if rows[i].n_minimizers == 1 and rows[j].n_minimizers == 1:
                g2 = True
                g2_pair = (hi.as_tuple(), hj.as_tuple())
                eigs = []
                for r in (rows[i], rows[j]):
                    if r.monodromy_eigs is not None:
                        eigs.extend(r.monodromy_eigs)
                if eigs and all(abs(z - 1.0) > 1e-6 for z in eigs):
                    g3 = True
                break
        if g2:
            break

    return GConditionsReport(
        rows=rows,
        g1=g1,
        g1_witness=g1_witness,
        g2=g2,
        g2_pair=g2_pair,
        g3=g3,
        resolution_note=(
            "uniqueness and foliation statements are resolution-bounded: "
            f"cluster dedup 1e-4, transversal grid {grid} at collar 1e-3"
        ),
    )
