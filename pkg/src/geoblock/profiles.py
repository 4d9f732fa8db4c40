"""Metric profiles f on the circle and the torus/cover point types.

The torus carries the revolution metric ``ds^2 = f(y)^2 dx^2 + dy^2`` on
T^2 = (R/Z)^2.  A profile is one of

* ``flat``:     f == 1,
* ``round``:    f(y) = R - r cos(2 pi y) with 0 < r < R (so f(0) = R - r is the
                unique minimum; compared with the embedded torus, lengths are
                scaled by 1/(2 pi), the period-1 normalization),
* ``fourier``:  a truncated series a0 + sum_k (c_k cos(2 pi k y) + s_k sin(2 pi k y)).

All profiles are 1-periodic by construction and are validated to be strictly
positive at construction time (dense sampling plus a Newton polish of the
sampled local minima).
"""

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import KIND_FLAT, KIND_FOURIER, KIND_ROUND
from .errors import ProfileError

_POSITIVITY_GRID = 10_000


@dataclass(frozen=True)
class MetricProfile:
    """Immutable profile of the revolution metric; period fixed to 1."""

    kind: str
    r: float = 0.0
    R: float = 0.0
    a0: float = 0.0
    cos: tuple = ()
    sin: tuple = ()

    def __post_init__(self):
        if self.kind == "flat":
            code, params = KIND_FLAT, np.zeros(1)
        elif self.kind == "round":
            if not (0.0 < self.r < self.R):
                raise ProfileError("round profile requires 0 < r < R")
            code, params = KIND_ROUND, np.array([float(self.r), float(self.R)])
        elif self.kind == "fourier":
            cos = tuple(float(c) for c in self.cos)
            sin = tuple(float(s) for s in self.sin)
            nharm = max(len(cos), len(sin))
            cos = cos + (0.0,) * (nharm - len(cos))
            sin = sin + (0.0,) * (nharm - len(sin))
            object.__setattr__(self, "cos", cos)
            object.__setattr__(self, "sin", sin)
            code = KIND_FOURIER
            params = np.concatenate([[float(self.a0), float(nharm)], cos, sin])
        else:
            raise ProfileError(f"unknown profile kind: {self.kind!r}")
        object.__setattr__(self, "_code", code)
        object.__setattr__(self, "_params", params)
        self._check_positive()

    @property
    def period(self) -> float:
        return 1.0

    @property
    def kernel_args(self):
        """(kind code, parameter vector) consumed by the numeric kernels."""
        return self._code, self._params

    @classmethod
    def flat(cls) -> "MetricProfile":
        return cls(kind="flat")

    @classmethod
    def round(cls, r: float, R: float) -> "MetricProfile":
        return cls(kind="round", r=float(r), R=float(R))

    @classmethod
    def fourier(cls, a0: float, cos=(), sin=()) -> "MetricProfile":
        return cls(kind="fourier", a0=float(a0), cos=tuple(cos), sin=tuple(sin))

    def _check_positive(self):
        code, params = self.kernel_args
        ys = np.linspace(0.0, 1.0, _POSITIVITY_GRID, endpoint=False)
        vals = np.array([_kernels.f_eval(code, params, y)[0] for y in ys])
        fmin = vals.min()
        if vals.max() - fmin < 1e-14:  # constant profile
            if fmin <= 0.0:
                raise ProfileError(f"profile is not strictly positive (min f = {fmin:.6g})")
            return
        idx = np.where((vals <= np.roll(vals, 1)) & (vals <= np.roll(vals, -1)))[0]
        for i in idx:
            y = ys[i]
            for _ in range(30):  # Newton polish of f' = 0
                f, fp, fpp = _kernels.f_eval(code, params, y)
                if fpp == 0.0 or abs(fp) < 1e-15:
                    break
                y -= fp / fpp
            f, _, _ = _kernels.f_eval(code, params, y)
            fmin = min(fmin, f)
        if fmin <= 0.0:
            raise ProfileError(f"profile is not strictly positive (min f = {fmin:.6g})")

    def to_dict(self) -> dict:
        if self.kind == "flat":
            return {"kind": "flat"}
        if self.kind == "round":
            return {"kind": "round", "r": self.r, "R": self.R}
        return {"kind": "fourier", "a0": self.a0, "cos": list(self.cos), "sin": list(self.sin)}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricProfile":
        try:
            kind = d["kind"]
        except (KeyError, TypeError):
            raise ProfileError("profile file must carry a 'kind' field")
        if kind == "flat":
            return cls.flat()
        if kind == "round":
            try:
                return cls.round(d["r"], d["R"])
            except KeyError as e:
                raise ProfileError(f"round profile missing field {e}")
        if kind == "fourier":
            return cls.fourier(d.get("a0", 0.0), d.get("cos", ()), d.get("sin", ()))
        raise ProfileError(f"unknown profile kind: {kind!r}")

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_profile(path) -> MetricProfile:
    """Read a declarative profile file (JSON) and construct the profile."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ProfileError(f"cannot read profile file {path}: {e}")
    return MetricProfile.from_dict(data)


def save_profile(profile: MetricProfile, path) -> None:
    with open(path, "w") as fh:
        json.dump(profile.to_dict(), fh, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class TorusPoint:
    """A point of T^2 with the canonical representative in [0,1) x [0,1)."""

    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x) % 1.0)
        object.__setattr__(self, "y", float(self.y) % 1.0)

    def lift(self) -> "CoverPoint":
        return CoverPoint(self.x, self.y)


@dataclass(frozen=True)
class CoverPoint:
    """A point of the universal cover R^2."""

    X: float
    Y: float

    def project(self) -> TorusPoint:
        return TorusPoint(self.X % 1.0, self.Y % 1.0)

    def __add__(self, other):
        return CoverPoint(self.X + other[0], self.Y + other[1])


def eval_f(profile: MetricProfile, y: float):
    """f(y) and its first two derivatives (exact closed forms)."""
    code, params = profile.kernel_args
    return _kernels.f_eval(code, params, float(y))


def f_array(profile: MetricProfile, y) -> np.ndarray:
    """Vectorized f(y) over an array of latitudes."""
    y = np.asarray(y, dtype=float)
    if profile.kind == "flat":
        return np.ones_like(y)
    if profile.kind == "round":
        return profile.R - profile.r * np.cos(2.0 * np.pi * y)
    out = np.full_like(y, profile.a0)
    for k, (c, s) in enumerate(zip(profile.cos, profile.sin), start=1):
        w = 2.0 * np.pi * k
        out += c * np.cos(w * y) + s * np.sin(w * y)
    return out


def gaussian_curvature(profile: MetricProfile, y: float) -> float:
    """K(y) = -f''(y)/f(y) for the metric f^2 dx^2 + dy^2."""
    f, _, fpp = eval_f(profile, y)
    return -fpp / f


def latitude_length(profile: MetricProfile, y: float) -> float:
    """Length of the circle of latitude x -> (x, y), which is f(y)."""
    return eval_f(profile, y)[0]


def circle_dist(a: float, b: float) -> float:
    """Distance on R/Z."""
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def dist_to_latitude(profile: MetricProfile, p: TorusPoint, a: float) -> float:
    """Distance from p to the latitude circle y = a.

    Exact because dy^2 <= ds^2 bounds every path below by its vertical
    displacement, and the vertical segment realizes that bound.
    """
    return circle_dist(p.y, a)


def min_latitudes(profile: MetricProfile, tol: float = 1e-9):
    """Latitudes of the global minima of f, Newton-polished from a dense grid."""
    code, params = profile.kernel_args
    ys = np.linspace(0.0, 1.0, 4096, endpoint=False)
    vals = np.array([_kernels.f_eval(code, params, y)[0] for y in ys])
    if vals.max() - vals.min() < tol:  # constant profile: every latitude is minimal
        return list(ys), float(vals.min())
    idx = np.where((vals <= np.roll(vals, 1)) & (vals <= np.roll(vals, -1)))[0]
    mins = []
    for i in idx:
        y = ys[i]
        for _ in range(40):
            f, fp, fpp = _kernels.f_eval(code, params, y)
            if fpp <= 0.0 or abs(fp) < 1e-16:
                break
            y -= fp / fpp
        f, _, _ = _kernels.f_eval(code, params, y)
        mins.append((y % 1.0, f))
    fmin = min(f for _, f in mins)
    out = sorted({round(y, 12) for y, f in mins if f <= fmin + tol})
    # merge wrap-around duplicates
    dedup = []
    for y in out:
        if all(circle_dist(y, z) > 1e-8 for z in dedup):
            dedup.append(y)
    return dedup, fmin
