"""Accuracy (hit-probability) curves and duel parameters.

An accuracy function P(t) gives the probability that one unit of resource
spent at time t in [0, 1] succeeds.  Admissible curves satisfy P(0) = 0,
P(1) = 1, P(t) < 1 for t < 1, and are nondecreasing; the second player's
curve must be strictly increasing so that it can be inverted.

Two families are provided:

- the power family P(t) = t**c with exponent c > 0, which is the canonical
  test family (c = 1 is the normalized case), and
- tabulated curves built from sample points with a shape-preserving
  (monotone) piecewise-cubic interpolant, loadable from two-column CSV.

``normalize_p2`` rescales time through the second player's curve so that
the transformed game has an identity second accuracy function.  The game
value is invariant under this change of variables, and solved curves pull
back through the inverse of the original curve.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

# Evaluations of log(1 - P(t)) clamp t at 1 - EPS_CLIP: the logarithm
# diverges at t = 1 but every integrand using it is integrable there, so
# the clamp perturbs results far below solver tolerances.
EPS_CLIP = 1e-12


def _check_domain(t, name: str = "t") -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12):
        raise ValueError(f"{name} must lie in [0, 1], got {t!r}")
    return np.clip(arr, 0.0, 1.0)


@dataclass(frozen=True)
class AccuracyFunction:
    """A monotone hit-probability curve on [0, 1] with derivative and inverse.

    Instances are immutable and safe to share between threads.  Use the
    constructors ``power``, ``from_samples``, ``from_csv`` or ``identity``
    rather than filling the callable fields by hand.
    """

    kind: str
    label: str
    strictly_increasing: bool
    _eval: Callable = field(repr=False)
    _deriv: Callable = field(repr=False)
    _inverse: Callable | None = field(repr=False, default=None)

    # -- constructors -----------------------------------------------------

    @staticmethod
    def power(c: float) -> "AccuracyFunction":
        """P(t) = t**c for an exponent c > 0."""
        c = float(c)
        if not c > 0.0:
            raise ValueError(f"power exponent must be positive, got {c}")

        def _deriv(t):
            t = np.asarray(t, dtype=float)
            if c == 1.0:
                return np.ones_like(t)
            with np.errstate(divide="ignore"):
                return c * np.power(t, c - 1.0)

        return AccuracyFunction(
            kind="power",
            label=f"power:{c:g}",
            strictly_increasing=True,
            _eval=lambda t: np.power(t, c),
            _deriv=_deriv,
            _inverse=lambda y: np.power(y, 1.0 / c),
        )

    @staticmethod
    def identity() -> "AccuracyFunction":
        return AccuracyFunction.power(1.0)

    @staticmethod
    def from_samples(ts, ps, label: str = "tabulated") -> "AccuracyFunction":
        """Monotone piecewise-cubic interpolant through (t_i, P_i) samples.

        Sample times must be strictly increasing from 0 to 1 and the values
        nondecreasing from 0 to 1.  The shape-preserving interpolant keeps
        the derivative nonnegative everywhere, which downstream code relies
        on (the survival factor 1 - P must not increase).
        """
        ts = np.asarray(ts, dtype=float)
        ps = np.asarray(ps, dtype=float)
        if ts.ndim != 1 or ts.shape != ps.shape or ts.size < 2:
            raise ValueError("need two equal-length 1-d sample arrays")
        if not (np.all(np.diff(ts) > 0) and ts[0] == 0.0 and ts[-1] == 1.0):
            raise ValueError("sample times must increase strictly from 0 to 1")
        if not (ps[0] == 0.0 and ps[-1] == 1.0 and np.all(np.diff(ps) >= 0)):
            raise ValueError("sample values must be nondecreasing from 0 to 1")
        if np.any(ps < 0.0) or np.any(ps > 1.0):
            raise ValueError("sample values must lie in [0, 1]")
        interp = PchipInterpolator(ts, ps, extrapolate=False)
        deriv = interp.derivative()
        strict = bool(np.all(np.diff(ps) > 0))
        inverse = PchipInterpolator(ps, ts, extrapolate=False) if strict else None
        return AccuracyFunction(
            kind="tabulated",
            label=label,
            strictly_increasing=strict,
            _eval=lambda t: np.clip(interp(t), 0.0, 1.0),
            _deriv=deriv,
            _inverse=(lambda y: inverse(np.clip(y, 0.0, 1.0))) if strict else None,
        )

    @staticmethod
    def from_csv(path) -> "AccuracyFunction":
        """Load a tabulated curve from two-column CSV rows (t, P(t))."""
        ts, ps = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    t, p = float(row[0]), float(row[1])
                except (IndexError, ValueError):
                    raise ValueError(f"bad CSV row in {path}: {row!r}") from None
                ts.append(t)
                ps.append(p)
        return AccuracyFunction.from_samples(ts, ps, label=f"csv:{path}")

    # -- evaluation --------------------------------------------------------

    def __call__(self, t):
        """P(t): success probability of a unit of resource spent at t."""
        out = self._eval(_check_domain(t))
        return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out

    def deriv(self, t):
        """dP/dt, from the family formula or the interpolant."""
        out = self._deriv(_check_domain(t))
        return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out

    def inverse(self, y):
        """P^{-1}(y) for y in [0, 1]; requires a strictly increasing curve."""
        if self._inverse is None:
            raise ValueError(f"{self.label} is not strictly increasing: no inverse")
        y = _check_domain(y, "y")
        out = self._inverse(y)
        return float(out) if np.ndim(y) == 0 else out

    def miss(self, t):
        """1 - P(t): probability that a unit spent at t fails."""
        out = 1.0 - self._eval(_check_domain(t))
        return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out

    def log_miss(self, t):
        """log(1 - P(t)) with t clamped to 1 - EPS_CLIP near the endpoint."""
        t = np.minimum(_check_domain(t), 1.0 - EPS_CLIP)
        out = np.log1p(-self._eval(t))
        return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out

    @cached_property
    def _log_miss_primitive(self) -> PchipInterpolator:
        # Antiderivative of log(1 - P) on [0, 1], tabulated once per curve.
        # The integrand has a logarithmic singularity at 1, so the mesh
        # refines geometrically toward that endpoint.
        mesh = np.unique(np.concatenate([
            np.linspace(0.0, 0.9, 181),
            1.0 - np.geomspace(0.1, 1e-13, 80),
            [1.0],
        ]))
        vals = np.empty_like(mesh)
        vals[0] = 0.0
        f = lambda tau: self.log_miss(tau)
        for i in range(1, mesh.size):
            piece, _ = quad(f, mesh[i - 1], mesh[i], epsabs=1e-14, epsrel=1e-12)
            vals[i] = vals[i - 1] + piece
        return PchipInterpolator(mesh, vals, extrapolate=False)

    def log_miss_integral(self, t1: float, t2: float) -> float:
        """Integral of log(1 - P(tau)) over [t1, t2], from the cached primitive."""
        if t2 < t1:
            raise ValueError("t2 must be >= t1")
        prim = self._log_miss_primitive
        return float(prim(_check_domain(t2)) - prim(_check_domain(t1)))


def compose_through_inverse(outer: AccuracyFunction,
                            inner: AccuracyFunction,
                            label: str | None = None) -> AccuracyFunction:
    """Accuracy curve tau -> outer(inner^{-1}(tau)).

    This is the transformed first-player curve after rescaling time through
    the second player's curve; it is again an admissible accuracy function.
    """
    if not inner.strictly_increasing:
        raise ValueError(f"{inner.label} is not invertible")

    def _eval(tau):
        return outer._eval(np.clip(inner._inverse(tau), 0.0, 1.0))

    def _deriv(tau):
        s = np.clip(inner._inverse(tau), 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return outer._deriv(s) / inner._deriv(s)

    strict = outer.strictly_increasing
    inv = None
    if strict:
        inv = lambda y: inner._eval(np.clip(outer._inverse(y), 0.0, 1.0))
    return AccuracyFunction(
        kind="composed",
        label=label or f"{outer.label}∘inv({inner.label})",
        strictly_increasing=strict,
        _eval=_eval,
        _deriv=_deriv,
        _inverse=inv,
    )


@dataclass(frozen=True)
class DuelParameters:
    """Game data: accuracy pair, resources and prizes.

    Player I (the gunner) holds an infinitely divisible resource a >= 0 and
    spends it continuously with accuracy p1; player II (the sniper) holds m
    integer shots with accuracy p2.  A success by player j is worth the
    prize Aj to that player; expected payoff is reported for player I.
    """

    p1: AccuracyFunction
    p2: AccuracyFunction
    a: float
    m: int
    A1: float = 1.0
    A2: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 0):
            raise ValueError(f"m must be a nonnegative integer, got {self.m!r}")
        if not self.a >= 0.0:
            raise ValueError(f"a must be nonnegative, got {self.a}")
        if not (self.A1 > 0.0 and self.A2 > 0.0):
            raise ValueError("prizes A1, A2 must be positive")
        if not self.p2.strictly_increasing:
            raise ValueError("p2 must be strictly increasing")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "A1", float(self.A1))
        object.__setattr__(self, "A2", float(self.A2))


class NormalizedDuel(NamedTuple):
    params: DuelParameters          # same game with identity second curve
    back_map: Callable              # tau -> original time, i.e. p2^{-1}
    forward_map: Callable           # original time -> tau, i.e. p2


def normalize_p2(params: DuelParameters) -> NormalizedDuel:
    """Rescale time so the second accuracy function becomes the identity.

    Returns the transformed parameters together with the map pulling solved
    curves back to original time.  The game value is unchanged by the
    transform; only the curves need the back-map.
    """
    if params.p2.kind == "power" and params.p2.label == "power:1":
        ident = params.p2
        return NormalizedDuel(
            params=DuelParameters(params.p1, ident, params.a, params.m,
                                  params.A1, params.A2),
            back_map=lambda y: y,
            forward_map=lambda t: t,
        )
    p1n = compose_through_inverse(params.p1, params.p2,
                                  label=f"normalized({params.p1.label})")
    return NormalizedDuel(
        params=DuelParameters(p1n, AccuracyFunction.identity(),
                              params.a, params.m, params.A1, params.A2),
        back_map=params.p2.inverse,
        forward_map=params.p2,
    )


def parse_accuracy(spec: str) -> AccuracyFunction:
    """Parse the CLI grammar ``power:<c>`` or ``csv:<path>``."""
    if spec.startswith("power:"):
        try:
            c = float(spec[len("power:"):])
        except ValueError:
            raise ValueError(f"bad power exponent in {spec!r}") from None
        return AccuracyFunction.power(c)
    if spec.startswith("csv:"):
        return AccuracyFunction.from_csv(spec[len("csv:"):])
    raise ValueError(f"accuracy spec must be 'power:<c>' or 'csv:<path>', got {spec!r}")
