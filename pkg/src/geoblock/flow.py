"""Geodesic flow, Jacobi fields, conjugate points and monodromy.

Geodesics of ``ds^2 = f(y)^2 dx^2 + dy^2`` are integrated in the universal
cover by an adaptive Dormand-Prince 5(4) scheme at local tolerance 1e-12,
with the velocity projected back onto the unit-speed level set after every
accepted step.  The Clairaut integral ``F = f^2(y) xi`` is conserved by the
equations and monitored as the main accuracy diagnostic.
"""

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import OK
from .errors import NotPeriodic, StepFailure
from .profiles import CoverPoint, MetricProfile, eval_f

DEFAULT_RTOL = 1e-12
DEFAULT_ATOL = 1e-12
DEFAULT_OUT_STEP = 0.02


@dataclass(frozen=True)
class PhaseState:
    """Unit tangent vector (x, y, xi, eta) in cover coordinates."""

    x: float
    y: float
    xi: float
    eta: float

    @property
    def pos(self) -> CoverPoint:
        return CoverPoint(self.x, self.y)

    def normalized(self, profile: MetricProfile) -> "PhaseState":
        f, _, _ = eval_f(profile, self.y)
        e = f * f * self.xi * self.xi + self.eta * self.eta
        s = 1.0 / math.sqrt(e)
        return PhaseState(self.x, self.y, self.xi * s, self.eta * s)

    def reversed(self) -> "PhaseState":
        return PhaseState(self.x, self.y, -self.xi, -self.eta)

    @classmethod
    def from_angle(cls, profile: MetricProfile, x: float, y: float, theta: float) -> "PhaseState":
        """Unit-speed state at angle theta in the orthonormal frame (f^-1 d/dx, d/dy)."""
        f, _, _ = eval_f(profile, y)
        return cls(float(x), float(y), math.cos(theta) / f, math.sin(theta))

    def angle(self, profile: MetricProfile) -> float:
        f, _, _ = eval_f(profile, self.y)
        return math.atan2(self.eta, f * self.xi)


def geodesic_rhs(profile: MetricProfile, state: PhaseState):
    """Time derivative (dx, dy, dxi, deta) of a unit-speed state."""
    f, fp, _ = eval_f(profile, state.y)
    return (
        state.xi,
        state.eta,
        -2.0 * (fp / f) * state.xi * state.eta,
        f * fp * state.xi * state.xi,
    )


def clairaut(profile: MetricProfile, state: PhaseState) -> float:
    """The Clairaut integral F = f^2(y) xi."""
    f, _, _ = eval_f(profile, state.y)
    return f * f * state.xi


@dataclass
class GeodesicTrace:
    """An arclength-sampled geodesic in the universal cover.

    `samples` has one row (x, y, xi, eta) per entry of `t`; `t` strictly
    increases from 0 to `length` with gaps of at most `out_step`.  Traces
    produced by gluing outward legs at a turning point carry assembled=True;
    their samples shadow the true geodesic but cannot be reproduced by one
    forward integration from t=0 in double precision.
    """

    t: np.ndarray
    samples: np.ndarray
    length: float
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    out_step: float = DEFAULT_OUT_STEP
    assembled: bool = False

    @property
    def X(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def Y(self) -> np.ndarray:
        return self.samples[:, 1]

    @property
    def xi(self) -> np.ndarray:
        return self.samples[:, 2]

    @property
    def eta(self) -> np.ndarray:
        return self.samples[:, 3]

    @property
    def start(self) -> PhaseState:
        return PhaseState(*self.samples[0])

    @property
    def end(self) -> PhaseState:
        return PhaseState(*self.samples[-1])

    def winding(self):
        """Lift displacement (X(L) - X(0), Y(L) - Y(0))."""
        return (self.X[-1] - self.X[0], self.Y[-1] - self.Y[0])

    def clairaut_values(self, profile: MetricProfile) -> np.ndarray:
        code, params = profile.kernel_args
        out = np.empty(len(self.t))
        for i in range(len(self.t)):
            f, _, _ = _kernels.f_eval(code, params, self.samples[i, 1])
            out[i] = f * f * self.samples[i, 2]
        return out

    def state_at(self, profile: MetricProfile, t: float) -> PhaseState:
        """State at parameter t, re-integrated from the nearest earlier sample."""
        if t < -1e-12 or t > self.length + 1e-12:
            raise ValueError(f"parameter {t} outside [0, {self.length}]")
        t = min(max(t, 0.0), self.length)
        i = int(np.searchsorted(self.t, t, side="right") - 1)
        i = min(max(i, 0), len(self.t) - 1)
        dt = t - self.t[i]
        if dt <= 1e-14:
            return PhaseState(*self.samples[i])
        code, params = profile.kernel_args
        y0 = np.zeros(6)
        y0[:4] = self.samples[i]
        yend, status = _kernels.integrate_final(
            code, params, y0, dt, self.rtol, self.atol, self.out_step, True, 4
        )
        if status != OK:
            raise StepFailure("re-integration inside trace failed")
        return PhaseState(yend[0], yend[1], yend[2], yend[3])

    def to_csv(self, profile: MetricProfile, path=None) -> str:
        """CSV columns (t, X, Y, xi, eta, clairaut); returns the text."""
        F = self.clairaut_values(profile)
        buf = io.StringIO()
        buf.write("t,X,Y,xi,eta,clairaut\n")
        for i in range(len(self.t)):
            x, y, xi, eta = self.samples[i]
            buf.write(f"{self.t[i]!r},{x!r},{y!r},{xi!r},{eta!r},{F[i]!r}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def envelope(self, profile: MetricProfile) -> dict:
        """JSON metadata envelope; the embedded tolerances are authoritative."""
        wx, wy = self.winding()
        return {
            "profile_hash": profile.hash(),
            "tolerances": {"rtol": self.rtol, "atol": self.atol, "out_step": self.out_step},
            "length": self.length,
            "winding": [wx, wy],
            "winding_class": [round(wx), round(wy)],
            "n_samples": int(len(self.t)),
            "assembled": self.assembled,
        }


def integrate(
    profile: MetricProfile,
    start: PhaseState,
    length: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    out_step: float = DEFAULT_OUT_STEP,
) -> GeodesicTrace:
    """Integrate the geodesic through `start` for the given arclength."""
    if length <= 0.0:
        raise ValueError("length must be positive")
    start = start.normalized(profile)
    code, params = profile.kernel_args
    y0 = np.array([start.x, start.y, start.xi, start.eta, 0.0, 0.0])
    ts, ys, status = _kernels.integrate_path(
        code, params, y0, float(length), rtol, atol, out_step, 4, True
    )
    if status != OK:
        raise StepFailure("adaptive step control failed; profile may be pathological")
    return GeodesicTrace(
        t=ts, samples=ys[:, :4].copy(), length=float(length),
        rtol=rtol, atol=atol, out_step=out_step,
    )


@dataclass
class JacobiSolution:
    """Scalar Jacobi field J'' + K(t) J = 0 sampled along a carrier trace."""

    t: np.ndarray
    J: np.ndarray
    Jp: np.ndarray
    zeros: list


def _jacobi_eval(profile, trace, i, J, Jp, dt):
    # value of (J, J') at time trace.t[i] + dt, restarting from sample i
    code, params = profile.kernel_args
    y0 = np.zeros(6)
    y0[:4] = trace.samples[i]
    y0[4] = J
    y0[5] = Jp
    yend, status = _kernels.integrate_final(
        code, params, y0, dt, trace.rtol, trace.atol, max(dt, 1e-6), True, 6
    )
    if status != OK:
        raise StepFailure("jacobi refinement failed")
    return yend[4], yend[5]


def jacobi(profile: MetricProfile, trace: GeodesicTrace, J0: float, J0p: float) -> JacobiSolution:
    """Solve the Jacobi equation along the trace with J(0)=J0, J'(0)=J0p.

    Zero crossings are located by sign change between samples plus bisection
    refined to 1e-10 in t.
    """
    if len(trace.t) == 0:
        raise ValueError("empty trace")
    code, params = profile.kernel_args
    J, Jp, status = _kernels.jacobi_along(
        code, params, trace.t, trace.samples, float(J0), float(J0p), trace.rtol, trace.atol
    )
    if status != OK:
        raise StepFailure("jacobi co-integration failed")
    zeros = []
    for i in range(len(trace.t) - 1):
        a, b = J[i], J[i + 1]
        if a == 0.0 and trace.t[i] > 0.0:
            zeros.append(float(trace.t[i]))
            continue
        if (a > 0.0) != (b > 0.0) and b != 0.0:
            sa = 1.0 if a > 0.0 else -1.0
            lo, hi = 0.0, trace.t[i + 1] - trace.t[i]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                val, _ = _jacobi_eval(profile, trace, i, a, Jp[i], mid)
                if sa * val <= 0.0:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-10:
                    break
            zeros.append(float(trace.t[i] + 0.5 * (lo + hi)))
    if J[-1] == 0.0 and trace.t[-1] > 0.0:
        zeros.append(float(trace.t[-1]))
    return JacobiSolution(t=trace.t.copy(), J=J, Jp=Jp, zeros=zeros)


def has_conjugate_points(profile: MetricProfile, trace: GeodesicTrace):
    """Whether the Jacobi field with J(0)=0, J'(0)=1 vanishes in (0, length).

    Returns (flag, first conjugate parameter or None).
    """
    sol = jacobi(profile, trace, 0.0, 1.0)
    interior = [z for z in sol.zeros if 1e-9 < z < trace.length - 1e-12]
    if interior:
        return True, interior[0]
    return False, None


def monodromy(profile: MetricProfile, trace: GeodesicTrace, closure_tol: float = 1e-8) -> np.ndarray:
    """Fundamental matrix of the Jacobi system over one period of a closed trace.

    Raises NotPeriodic unless the end state equals the start state within
    closure_tol (position compared modulo the integer lattice).
    """
    s, e = trace.start, trace.end
    dx = (e.x - s.x) - round(e.x - s.x)
    dy = (e.y - s.y) - round(e.y - s.y)
    gap = math.hypot(dx, dy) + math.hypot(e.xi - s.xi, e.eta - s.eta)
    if gap > closure_tol:
        raise NotPeriodic(f"trace does not close up (gap {gap:.3g} > {closure_tol:.3g})")
    code, params = profile.kernel_args
    J1, J1p, st1 = _kernels.jacobi_along(
        code, params, trace.t, trace.samples, 1.0, 0.0, trace.rtol, trace.atol
    )
    J2, J2p, st2 = _kernels.jacobi_along(
        code, params, trace.t, trace.samples, 0.0, 1.0, trace.rtol, trace.atol
    )
    if st1 != OK or st2 != OK:
        raise StepFailure("monodromy co-integration failed")
    return np.array([[J1[-1], J2[-1]], [J1p[-1], J2p[-1]]])
