"""Two-stage numerical solver for the optimal-action threshold curves.

Everything here works on the normalized game in which the second accuracy
function is the identity (``normalize_p2`` supplies the transform and the
back-map).  Write p(t) = 1 - P1(t) for the transformed first curve's miss
probability.  The threshold curves T_k(x), one per remaining shot count k,
satisfy T_k(0) = 1, are strictly decreasing in x, strictly interleaved
(T_k < T_{k-1}), and solve a triangular ODE system whose k-th right-hand
side depends on the curves below it through the survival product
pi_k(x) = prod_{i<=k} (1 - T_i(x)).

Stage 1.  The first curve is obtained by quadrature and inversion of

    x(t) = -integral_t^1 dtau / (tau * log p(tau)),

which is strictly decreasing with x(1) = 0, so T_1(x_i) solves
x(T_1) = x_i by bracketed root finding.

Stage 2.  The system is singular at x = 0 (all slopes diverge), so each
higher curve is integrated in the variable u = T_1(x), running from a
start point u0 < 1 down to T_1(a).  Level k starts an upper solution on
the previous curve and a lower solution on the implicit floor f_k (the
root of the slope numerator); the true curve is trapped between them, the
bracket gap shrinks monotonically along the integration, and the level's
output is the bracket average wherever the gap is below the configured
tolerance.  If the gap has not collapsed by the left edge of the
requested grid, the start offset 1 - u0 is halved and stage 2 restarts.

The equilibrium identity

    exp(integral_0^x log(1 - P1(T_k(alpha))) dalpha)
        + prod_{i<=k} (1 - P2(T_i(x)))  =  1

is the primary correctness functional: ``equilibrium_residual`` evaluates
its defect along the tabulated curves, and ``game_value`` cross-checks the
product and exponential-integral forms of the value against each other.
The head of the integral below the table's covered range uses the
identity's exact limit value at the coverage edge, where both terms are
within solver tolerance of their limits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .accuracy import (AccuracyFunction, DuelParameters, EPS_CLIP,
                       normalize_p2, parse_accuracy)

__all__ = [
    "SolverConfig", "TTable", "GameValue", "SolverError", "BracketError",
    "CoverageError", "AccuracyCheckError", "first_curve_resource",
    "tabulate_first_curve", "curve_slope", "curve_floor", "solve_game",
    "game_value", "equilibrium_residual",
]


class SolverError(RuntimeError):
    """Base class for solver failures."""


class BracketError(SolverError):
    """A required sign change or bracket ordering failed."""


class CoverageError(SolverError):
    """The bracket gap did not collapse over the requested grid."""


class AccuracyCheckError(SolverError):
    """An internal consistency check exceeded its tolerance."""


@dataclass(frozen=True)
class SolverConfig:
    """Grid and tolerance settings for ``solve_game``.

    ``u0`` is the stage-2 start point in the transformed variable; the
    offset 1 - u0 is halved automatically (up to ``max_delta_halvings``
    times) until the bracket gap is below ``eps`` over the whole grid.
    """

    a0: float
    a: float
    h: float
    u0: float = 1.0 - 1e-3
    eps: float = 1e-6
    ode_tol: float = 1e-9
    root_tol: float = 1e-12
    max_delta_halvings: int = 20

    def __post_init__(self):
        if not 0.0 < self.a0 < self.a:
            raise ValueError(f"need 0 < a0 < a, got a0={self.a0}, a={self.a}")
        if not 0.0 < self.h <= self.a - self.a0:
            raise ValueError(f"need 0 < h <= a - a0, got h={self.h}")
        if not 0.0 < self.u0 < 1.0:
            raise ValueError(f"need 0 < u0 < 1, got u0={self.u0}")
        for name in ("eps", "ode_tol", "root_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.max_delta_halvings < 0:
            raise ValueError("max_delta_halvings must be >= 0")

    def grid(self) -> np.ndarray:
        """Output grid a0, a0 + h, ... (last point not past a)."""
        n = int(math.floor((self.a - self.a0) / self.h + 1e-9)) + 1
        return self.a0 + self.h * np.arange(n)

    def as_dict(self) -> dict:
        return {
            "a0": self.a0, "a": self.a, "h": self.h, "u0": self.u0,
            "eps": self.eps, "ode_tol": self.ode_tol,
            "root_tol": self.root_tol,
            "max_delta_halvings": self.max_delta_halvings,
        }


# ---------------------------------------------------------------------------
# stage 1: the first curve by quadrature and inversion
# ---------------------------------------------------------------------------

def _stage1_integrand(p1: AccuracyFunction) -> Callable:
    def f(tau):
        return -1.0 / (tau * p1.log_miss(tau))
    return f


def first_curve_resource(t: float, p1: AccuracyFunction) -> float:
    """Resource coordinate x at which the first threshold curve crosses t.

    Normalized game only (identity second curve).  Strictly decreasing in
    t with value 0 at t = 1; diverges as t -> 0, so t = 0 is rejected.
    """
    if not 0.0 < t <= 1.0:
        raise ValueError(f"need t in (0, 1], got {t}")
    if t == 1.0:
        return 0.0
    val, _ = quad(_stage1_integrand(p1), t, 1.0,
                  epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(val)


class _ResourceMap:
    """Cumulative tabulation of the stage-1 quadrature with exact refinement.

    Bulk inversions of x(t) would otherwise pay one adaptive quadrature per
    root-finder step; the cumulative table makes each exact evaluation a
    short local quadrature from the nearest node.
    """

    def __init__(self, p1: AccuracyFunction, x_needed: float):
        self._f = _stage1_integrand(p1)
        self._lm = p1.log_miss
        # extend downward multiplicatively until the map covers x_needed
        t_lo = 0.8
        x_at = self._raw_x(t_lo)
        while x_at < x_needed * 1.05 + 0.1:
            t_lo *= 0.96
            x_at = self._raw_x(t_lo)
            if t_lo < 1e-8:
                raise SolverError("stage-1 map could not cover the grid")
        mesh = np.unique(np.concatenate([
            np.linspace(t_lo, 0.8, max(8, int((0.8 - t_lo) / 0.004))),
            np.linspace(0.8, 0.999, 200),
            1.0 - np.geomspace(0.2, 1e-12, 160),
        ]))
        mesh = mesh[(mesh > 0.0) & (mesh < 1.0)]
        xs = np.empty_like(mesh)
        # accumulate from the right edge: x(mesh[-1]) by direct quadrature,
        # then short exact pieces leftward
        xs[-1] = self._tail_x(mesh[-1])
        for i in range(mesh.size - 2, -1, -1):
            piece, _ = quad(self._f, mesh[i], mesh[i + 1],
                            epsabs=1e-14, epsrel=1e-13, limit=100)
            xs[i] = xs[i + 1] + piece
        self.ts = mesh
        self.xs = xs
        self._t_of_x = PchipInterpolator(xs[::-1], mesh[::-1], extrapolate=False)
        self._x_of_t = PchipInterpolator(mesh, xs, extrapolate=False)

    def _raw_x(self, t: float) -> float:
        val, _ = quad(self._f, t, 1.0, epsabs=1e-12, epsrel=1e-11, limit=200)
        return float(val)

    def _tail_x(self, t: float) -> float:
        val, _ = quad(self._f, t, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
        return float(val)

    def exact_x(self, t: float) -> float:
        """x(t) by a short quadrature from the nearest tabulated node."""
        if t >= self.ts[-1]:
            return self._tail_x(t)
        j = int(np.searchsorted(self.ts, t))
        piece, _ = quad(self._f, t, self.ts[j],
                        epsabs=1e-14, epsrel=1e-13, limit=100)
        return float(self.xs[j] + piece)

    def u_of_x(self, x):
        """Interpolated inverse map."""
        return self._t_of_x(np.clip(x, self.xs[-1], self.xs[0]))

    def invert_polished(self, x: float) -> float:
        """Inverse map refined by Newton steps on the exact quadrature.

        dx/dt = 1/(t log p(t)) is analytic, so each step roughly squares
        the interpolation error of the initial guess.
        """
        t = float(self.u_of_x(x))
        for _ in range(2):
            g = self.exact_x(t) - x
            if abs(g) < 1e-13:
                break
            deriv = 1.0 / (t * self._lm(t))
            t = float(np.clip(t - g / deriv, t * 0.5, 0.5 * (1.0 + t)))
        return t

    def invert_exact(self, x: float, root_tol: float) -> float:
        """t with |x(t) - x| below root tolerance, via bracketed refinement."""
        guess = float(self.u_of_x(x))
        j = int(np.clip(np.searchsorted(self.ts, guess), 1, self.ts.size - 1))
        lo, hi = self.ts[j - 1], self.ts[j]
        f = lambda t: self.exact_x(t) - x
        flo, fhi = f(lo), f(hi)
        while flo < 0.0:   # x(lo) too small: move the bracket left
            j -= 1
            if j < 1:
                raise BracketError(f"could not bracket the grid point x={x}")
            lo = self.ts[j - 1]
            hi = self.ts[j]
            flo, fhi = f(lo), f(hi)
        while fhi > 0.0:
            j += 1
            if j >= self.ts.size:
                raise BracketError(f"could not bracket the grid point x={x}")
            hi = self.ts[j]
            fhi = f(hi)
        return float(brentq(f, lo, hi, xtol=root_tol, rtol=4 * np.finfo(float).eps))


def tabulate_first_curve(xs: Sequence[float], p1: AccuracyFunction,
                         root_tol: float = 1e-12) -> np.ndarray:
    """First threshold curve at the given resource points (normalized game).

    Each value solves x(T_1) = x_i by bracketed root finding; the residual
    against the exact quadrature is below 1e-10 at every point.
    """
    xs = np.asarray(xs, dtype=float)
    if np.any(xs <= 0.0):
        raise ValueError("grid points must be positive")
    rmap = _ResourceMap(p1, float(np.max(xs)))
    return np.array([rmap.invert_exact(float(x), root_tol) for x in xs])


# ---------------------------------------------------------------------------
# stage 2: higher curves between bracketing solutions
# ---------------------------------------------------------------------------

def _slope_numerator(t, log_miss_t, pi_prev, log_miss_prev):
    # numerator of dT_k/dx in the normalized game; its unique root in t is
    # the level's floor, and it is negative between floor and curve k-1
    return ((1.0 - pi_prev * (1.0 - t)) * log_miss_t
            - (1.0 - pi_prev) * (1.0 - t) * log_miss_prev)


def curve_slope(prev_values: Sequence[float], t: float,
                p1: AccuracyFunction) -> float:
    """dT_k/dx at a point, given the values of curves 1..k-1 there.

    Normalized game.  ``prev_values`` must be strictly decreasing; for the
    first curve pass an empty sequence, which reduces to t * log p(t).
    """
    prev = list(prev_values)
    if not 0.0 < t < 1.0:
        raise ValueError(f"need t in (0, 1), got {t}")
    if any(b >= a for a, b in zip(prev, prev[1:])):
        raise ValueError("previous curve values must decrease strictly")
    pi_prev = float(np.prod([1.0 - v for v in prev])) if prev else 1.0
    lm_prev = p1.log_miss(prev[-1]) if prev else 0.0
    return _slope_numerator(t, p1.log_miss(t), pi_prev, lm_prev) / pi_prev


def curve_floor(prev_values: Sequence[float], p1: AccuracyFunction,
                root_tol: float = 1e-12) -> float:
    """The implicit floor below the k-th curve, given curves 1..k-1 there.

    Unique root of the slope numerator in (0, T_{k-1}); the numerator is
    positive at 0+ and negative at T_{k-1} (where it equals
    T_{k-1} * log p(T_{k-1})), and both signs are asserted before the
    bisection rather than assumed.
    """
    prev = list(prev_values)
    if not prev:
        raise ValueError("the floor is defined for levels k >= 2")
    pi_prev = float(np.prod([1.0 - v for v in prev]))
    lm_prev = p1.log_miss(prev[-1])

    def f(t):
        return _slope_numerator(t, p1.log_miss(t), pi_prev, lm_prev)

    lo, hi = EPS_CLIP, prev[-1]
    flo, fhi = f(lo), f(hi)
    if not flo > 0.0:
        raise BracketError(f"floor numerator not positive at t->0 (got {flo})")
    if not fhi < 0.0:
        raise BracketError(
            f"floor numerator not negative at the previous curve (got {fhi})")
    return float(brentq(f, lo, hi, xtol=root_tol, rtol=4 * np.finfo(float).eps))


class _UCurves:
    """Curve values in the transformed variable u; level 1 is the identity."""

    def __init__(self, u_lo: float, u_hi: float):
        self.u_lo, self.u_hi = u_lo, u_hi
        self._dense: dict[int, Callable] = {}

    def add(self, k: int, dense: Callable) -> None:
        self._dense[k] = dense

    def value(self, k: int, u):
        if k == 1:
            return u
        yz = self._dense[k](np.clip(u, self.u_lo, self.u_hi))
        return 0.5 * (yz[0] + yz[1])

    def values_below(self, k: int, u) -> list:
        return [self.value(i, u) for i in range(1, k)]


@dataclass(frozen=True)
class LevelDiagnostics:
    """Bracket behavior of one stage-2 level."""

    k: int
    u0: float
    gap_initial: float        # upper minus lower start values
    u_star: float             # largest u below u0 with gap under eps
    gap_at_grid_edge: float   # gap at u = T_1(a0)
    steps: int
    gap_monotone: bool        # gap nonincreasing along the integration
    max_gap_increase: float

    def as_dict(self) -> dict:
        return {
            "k": self.k, "u0": self.u0, "gap_initial": self.gap_initial,
            "u_star": self.u_star, "gap_at_grid_edge": self.gap_at_grid_edge,
            "steps": self.steps, "gap_monotone": self.gap_monotone,
            "max_gap_increase": self.max_gap_increase,
        }


def integrate_level(k: int, curves: _UCurves, p1: AccuracyFunction,
                    u0: float, u_end: float, u_grid_edge: float,
                    config: SolverConfig):
    """Integrate the k-th level's bracketing pair from u0 down to u_end.

    The upper solution starts on curve k-1, the lower on the level's floor;
    their order is checked at every accepted step and an inversion aborts
    the solve.  Raises ``CoverageError`` when the gap at the grid's left
    edge is still at or above ``config.eps`` (the caller then halves the
    start offset and retries).
    """
    t_prev_u0 = float(curves.value(k - 1, u0))
    floor_u0 = curve_floor(curves.values_below(k, u0), p1, config.root_tol)
    if not floor_u0 < t_prev_u0:
        raise BracketError(
            f"level {k}: floor {floor_u0} not below previous curve {t_prev_u0}")

    def rhs(u, yz):
        prev = curves.values_below(k, u)
        pi_prev = float(np.prod([1.0 - v for v in prev]))
        lm_prev = p1.log_miss(prev[-1])
        den = pi_prev * u * p1.log_miss(u)
        t = np.clip(yz, 1e-14, 1.0 - 1e-14)
        return [
            _slope_numerator(t[0], p1.log_miss(t[0]), pi_prev, lm_prev) / den,
            _slope_numerator(t[1], p1.log_miss(t[1]), pi_prev, lm_prev) / den,
        ]

    sol = solve_ivp(rhs, (u0, u_end), [t_prev_u0, floor_u0], method="RK45",
                    rtol=config.ode_tol, atol=config.ode_tol,
                    dense_output=True)
    if not sol.success:
        raise SolverError(f"level {k} integration failed: {sol.message}")
    gap = sol.y[0] - sol.y[1]
    if np.any(gap < -1e-11):
        raise BracketError(
            f"level {k}: lower solution crossed above the upper one "
            f"(min gap {gap.min():.3e})")
    increases = np.diff(gap)   # sol.t runs downward, so gaps should shrink
    max_increase = float(increases.max()) if increases.size else 0.0

    def gap_at(u: float) -> float:
        yz = sol.sol(u)
        return float(yz[0] - yz[1])

    gap_edge = gap_at(u_grid_edge)
    if not gap_edge < config.eps:
        raise CoverageError(
            f"level {k}: bracket gap {gap_edge:.3e} at the grid edge "
            f"(needs < {config.eps:g}); start offset too large")
    if gap[0] < config.eps:
        u_star = u0
    else:
        jj = int(np.argmax(gap < config.eps))
        u_star = float(brentq(lambda u: gap_at(u) - config.eps,
                              sol.t[jj], sol.t[jj - 1], xtol=1e-14))
    diag = LevelDiagnostics(
        k=k, u0=u0, gap_initial=float(gap[0]), u_star=u_star,
        gap_at_grid_edge=gap_edge, steps=int(sol.t.size),
        gap_monotone=bool(max_increase <= 1e-10),
        max_gap_increase=max(max_increase, 0.0),
    )
    return sol.sol, diag


# ---------------------------------------------------------------------------
# the solved table
# ---------------------------------------------------------------------------

class GameValue(NamedTuple):
    product_form: float
    exponential_form: float
    gap: float


class TTable:
    """Tabulated threshold curves T_1..T_m with interpolation.

    ``grid``/``curves`` are the published tabulation in original time
    units.  Freshly solved tables also carry a finer solution mesh
    (extending below the grid start) which backs the interpolants; tables
    loaded from CSV fall back to the grid itself.  Immutable once built.
    """

    def __init__(self, grid, curves, params: DuelParameters,
                 config: SolverConfig, values: Sequence[float],
                 mesh_x=None, mesh_curves=None, diagnostics: dict | None = None,
                 x_trust: float | None = None):
        self.grid = np.asarray(grid, dtype=float)
        self.curves = np.asarray(curves, dtype=float).reshape(-1, self.grid.size)
        self.params = params
        self.config = config
        self.values = list(map(float, values))
        self.diagnostics = diagnostics or {}
        if mesh_x is None:
            mesh_x, mesh_curves = self.grid, self.curves
        self.mesh_x = np.asarray(mesh_x, dtype=float)
        self.mesh_curves = np.asarray(mesh_curves, dtype=float)
        self.m = self.curves.shape[0]
        self.x_min = float(self.mesh_x[0])
        self.x_max = float(self.mesh_x[-1])
        # left edge of the fully converged bracket zone: identity-based
        # head terms anchor here, while the mesh below it (bracket-average
        # values, still within the recorded gap of the true curves) only
        # supports strategy realizations at near-exhausted resource levels
        self.x_trust = float(x_trust) if x_trust is not None else self.x_min
        self._interp = [PchipInterpolator(self.mesh_x, row)
                        for row in self.mesh_curves]
        self._dinterp = [ip.derivative() for ip in self._interp]
        self._validate()
        self.eps_t = self._interpolation_tolerance()

    # -- structure ---------------------------------------------------------

    def _validate(self):
        if self.curves.shape != (self.m, self.grid.size):
            raise ValueError("curve matrix shape mismatch")
        for k, row in enumerate(self.mesh_curves, start=1):
            if np.any(row <= 0.0) or np.any(row > 1.0):
                raise ValueError(f"curve {k} leaves (0, 1]")
            if np.any(np.diff(row) >= 0.0):
                raise ValueError(f"curve {k} is not strictly decreasing")
        for upper, lower in zip(self.mesh_curves, self.mesh_curves[1:]):
            if np.any(lower >= upper):
                raise ValueError("curve ordering violated")

    def ordering_violations(self) -> int:
        """Grid points violating 0 < T_m < ... < T_1 <= 1 or monotonicity."""
        bad = 0
        for row in self.curves:
            bad += int(np.sum(row <= 0.0) + np.sum(row > 1.0))
            bad += int(np.sum(np.diff(row) >= 0.0))
        for upper, lower in zip(self.curves, self.curves[1:]):
            bad += int(np.sum(lower >= upper))
        return bad

    def _interpolation_tolerance(self) -> float:
        # worst chord-vs-interpolant midpoint deviation: the mismatch seen
        # when piecewise-linear realizations are checked against the table
        sag = 0.0
        mids = 0.5 * (self.mesh_x[:-1] + self.mesh_x[1:])
        for ip, row in zip(self._interp, self.mesh_curves):
            chord = 0.5 * (row[:-1] + row[1:])
            sag = max(sag, float(np.max(np.abs(ip(mids) - chord))))
        return max(2.0 * sag, 1e-9)

    # -- curve evaluation ----------------------------------------------------

    def _clamp(self, x):
        return np.clip(x, self.x_min, self.x_max)

    def t(self, k: int, x):
        """T_k(x); resource levels outside the mesh clamp to its edges."""
        if not 1 <= k <= self.m:
            raise ValueError(f"curve index {k} outside 1..{self.m}")
        out = self._interp[k - 1](self._clamp(x))
        return float(out) if np.ndim(x) == 0 else out

    def t_deriv(self, k: int, x):
        """dT_k/dx from the interpolant."""
        if not 1 <= k <= self.m:
            raise ValueError(f"curve index {k} outside 1..{self.m}")
        out = self._dinterp[k - 1](self._clamp(x))
        return float(out) if np.ndim(x) == 0 else out

    def t_inverse(self, k: int, t_value: float) -> float:
        """Resource level x with T_k(x) = t_value (curves decrease in x)."""
        lo_val = self.t(k, self.x_max)
        hi_val = self.t(k, self.x_min)
        if not lo_val <= t_value <= hi_val:
            raise ValueError(
                f"t={t_value} outside curve {k} range [{lo_val}, {hi_val}]")
        return float(brentq(lambda x: self.t(k, x) - t_value,
                            self.x_min, self.x_max, xtol=1e-14))

    def survival_product(self, x: float, k: int) -> float:
        """prod_{i<=k} (1 - P2(T_i(x))): both players' survival of the
        first k prescribed shots when the resource level is x."""
        if x == 0.0:
            return 0.0   # T_i(0) = 1 and P2(1) = 1
        out = 1.0
        for i in range(1, k + 1):
            out *= 1.0 - float(self.params.p2(self.t(i, x)))
        return out

    def head_log_survival(self, k: int, x_head: float | None = None) -> float:
        """Exact limit of integral_0^{x_head} log(1 - P1(T_k)) dalpha.

        Equals log(1 - pi_k(x_head)) by the equilibrium identity, which
        holds to solver tolerance at the trusted edge (the default head).
        """
        x_head = self.x_trust if x_head is None else x_head
        return float(np.log1p(-self.survival_product(x_head, k)))

    _GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)

    def _log_miss_cumulative(self, k: int):
        # cumulative integral of log(1 - P1(T_k)) along the mesh, by
        # per-interval Gauss-Legendre: the integrand is smooth inside each
        # interpolation interval, so the fixed rule is effectively exact
        cache = self.__dict__.setdefault("_lm_cum", {})
        if k not in cache:
            lo, hi = self.mesh_x[:-1], self.mesh_x[1:]
            half = 0.5 * (hi - lo)
            pts = (0.5 * (hi + lo)[:, None]
                   + half[:, None] * self._GL_NODES[None, :])
            vals = self.params.p1.log_miss(self._interp[k - 1](pts))
            pieces = half * (vals @ self._GL_WEIGHTS)
            cache[k] = np.concatenate([[0.0], np.cumsum(pieces)])
        return cache[k]

    def _log_miss_upto(self, k: int, x: float) -> float:
        # integral from x_min to x (x within the mesh range)
        cum = self._log_miss_cumulative(k)
        j = int(np.searchsorted(self.mesh_x, x, side="right") - 1)
        j = min(max(j, 0), self.mesh_x.size - 2)
        lo = self.mesh_x[j]
        if x <= lo:
            return float(cum[j])
        half = 0.5 * (x - lo)
        pts = 0.5 * (x + lo) + half * self._GL_NODES
        vals = self.params.p1.log_miss(self._interp[k - 1](self._clamp(pts)))
        return float(cum[j] + half * (vals @ self._GL_WEIGHTS))

    def log_miss_line_integral(self, k: int, x1: float, x2: float) -> float:
        """integral_{x1}^{x2} log(1 - P1(T_k(alpha))) dalpha along the table."""
        if x2 < x1:
            raise ValueError("x2 must be >= x1")
        return self._log_miss_upto(k, x2) - self._log_miss_upto(k, x1)

    def tracking_segment(self, n: int, x_from: float, t_stop: float):
        """Piecewise-linear descent along curve n from resource x_from.

        Returns (times, levels, tail_hazard).  When ``t_stop`` is before
        the end of the game the segment stops at the curve point with that
        time and the tail is zero; otherwise the segment descends to the
        table's coverage edge and the remaining spend down to zero is
        carried as an exact hazard from the survival product there.
        """
        if x_from <= self.x_min:
            tail = -self.head_log_survival(n, self.x_min)
            return (float(self.t(n, self.x_min)),), (float(x_from),), tail
        xs = [x_from] + [float(x) for x in self.mesh_x[self.mesh_x < x_from][::-1]]
        times = [self.t(n, x) for x in xs]
        if t_stop < times[-1]:
            keep = [i for i, tv in enumerate(times) if tv < t_stop]
            xs = [xs[i] for i in keep]
            times = [times[i] for i in keep]
            x_stop = self.t_inverse(n, t_stop)
            xs.append(x_stop)
            times.append(t_stop)
            tail = 0.0
        else:
            tail = -self.head_log_survival(n, self.x_min)
        return tuple(times), tuple(xs), tail

    # -- files ---------------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            header = ",".join(["x"] + [f"T_{k}" for k in range(1, self.m + 1)])
            fh.write(header + "\n")
            for j, x in enumerate(self.grid):
                row = [x] + [self.curves[k][j] for k in range(self.m)]
                fh.write(",".join(f"{v:.12g}" for v in row) + "\n")

    def sidecar(self) -> dict:
        r12 = lambda v: float(f"{v:.12g}")
        return {
            "format": "noisyduel-table",
            "tool_version": _tool_version(),
            "params": {
                "p1": self.params.p1.label, "p2": self.params.p2.label,
                "a": self.params.a, "m": self.params.m,
                "A1": self.params.A1, "A2": self.params.A2,
            },
            "config": self.config.as_dict(),
            "values": [r12(v) for v in self.values],
            "x_min": r12(self.x_min),
            "x_trust": r12(self.x_trust),
            "eps_t": r12(self.eps_t),
            "diagnostics": self.diagnostics,
            "mesh": {
                "x": [r12(v) for v in self.mesh_x],
                "curves": [[r12(v) for v in row] for row in self.mesh_curves],
            },
        }

    def write(self, prefix) -> tuple[str, str]:
        """Write <prefix>.csv and <prefix>.json; returns both paths."""
        prefix = str(prefix)
        csv_path, json_path = prefix + ".csv", prefix + ".json"
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        return csv_path, json_path

    @staticmethod
    def load(prefix) -> "TTable":
        """Load a table written by ``write``.

        The CSV grid is authoritative: if its values disagree with the
        sidecar's solution mesh (e.g. the file was edited), the mesh is
        dropped and interpolation falls back to the grid, so verification
        sees exactly what the CSV contains.
        """
        prefix = str(prefix)
        if prefix.endswith(".csv"):
            prefix = prefix[:-4]
        data = np.loadtxt(prefix + ".csv", delimiter=",", skiprows=1, ndmin=2)
        with open(prefix + ".json") as fh:
            side = json.load(fh)
        if side.get("format") != "noisyduel-table":
            raise ValueError(f"{prefix}.json is not a table sidecar")
        grid, curves = data[:, 0], data[:, 1:].T
        p = side["params"]
        params = DuelParameters(parse_accuracy(p["p1"]), parse_accuracy(p["p2"]),
                                p["a"], int(p["m"]), p["A1"], p["A2"])
        config = SolverConfig(**side["config"])
        mesh_x = mesh_curves = None
        x_trust = None
        mesh = side.get("mesh") or {}
        if mesh.get("x"):
            mx = np.asarray(mesh["x"], dtype=float)
            mc = np.asarray(mesh["curves"], dtype=float)
            on_grid = mc[:, np.searchsorted(mx, grid)] if curves.size else mc
            if curves.size == 0 or (
                    on_grid.shape == curves.shape
                    and np.allclose(on_grid, curves, rtol=0, atol=1e-9)):
                mesh_x, mesh_curves = mx, mc
                x_trust = side.get("x_trust")
        return TTable(grid, curves, params, config, side.get("values", []),
                      mesh_x=mesh_x, mesh_curves=mesh_curves,
                      diagnostics=side.get("diagnostics", {}),
                      x_trust=x_trust)


def _tool_version() -> str:
    from . import __version__
    return __version__


# ---------------------------------------------------------------------------
# the full solve
# ---------------------------------------------------------------------------

def _run_stage2(p1n: AccuracyFunction, m: int, u0: float, u_end: float,
                u_grid_edge: float, config: SolverConfig):
    curves = _UCurves(u_end, u0)
    diags = []
    for k in range(2, m + 1):
        dense, diag = integrate_level(k, curves, p1n, u0, u_end,
                                      u_grid_edge, config)
        curves.add(k, dense)
        diags.append(diag)
    return curves, diags


def solve_game(params: DuelParameters,
               config: SolverConfig) -> tuple[TTable, list[float]]:
    """Solve the duel: tabulate all threshold curves and the game values.

    Normalizes the game, runs stage 1 (quadrature inversion for the first
    curve) and stage 2 (bracketed integration for each higher curve) with
    automatic halving of the stage-2 start offset, then pulls the curves
    back to original time.  Returns the table and [v_1(a), ..., v_m(a)].
    """
    m = params.m
    norm = normalize_p2(params)
    p1n = norm.params.p1
    grid = config.grid()

    rmap = _ResourceMap(p1n, config.a)
    t1_grid = np.array([rmap.invert_exact(float(x), config.root_tol)
                        for x in grid])
    u_at_a = (t1_grid[-1] if abs(grid[-1] - config.a) < 1e-12
              else rmap.invert_exact(config.a, config.root_tol))
    u_grid_edge = float(t1_grid[0])

    delta = 1.0 - config.u0
    halvings = 0
    last_error: SolverError | None = None
    curves_u = diags = None
    while halvings <= config.max_delta_halvings:
        u0 = 1.0 - delta
        if u0 <= u_grid_edge:
            last_error = CoverageError(
                f"stage-2 start u0={u0} does not clear the grid edge")
        else:
            try:
                curves_u, diags = _run_stage2(p1n, m, u0, u_at_a,
                                              u_grid_edge, config)
                break
            except CoverageError as exc:
                last_error = exc
        delta *= 0.5
        halvings += 1
    else:
        raise CoverageError(
            f"start-offset halvings exhausted "
            f"({config.max_delta_halvings}): {last_error}")

    u0 = 1.0 - delta
    u_edge = min([d.u_star for d in diags], default=u0)
    x_trust = rmap.exact_x(u_edge)
    # the mesh descends to the stage-2 start so that strategy realizations
    # can follow curves down to (almost) exhausted resource levels
    x_soft = rmap.exact_x(u0) * 1.02 if m >= 2 else min(1e-5, grid[0] / 50)

    n_sub = max(1, min(4, 1600 // max(grid.size, 1)))
    refined = np.unique(np.concatenate(
        [np.linspace(grid[i], grid[i + 1], n_sub + 1)
         for i in range(grid.size - 1)] + [grid, [config.a]]))
    if x_soft < grid[0] * (1.0 - 1e-12):
        low = np.geomspace(x_soft, grid[0], 45)[:-1]
        mesh_x = np.concatenate([low, refined])
    else:
        mesh_x = refined
    mesh_u = np.array([rmap.invert_polished(float(x)) for x in mesh_x])
    # pin the exact stage-1 values at the published grid points
    gi = np.searchsorted(mesh_x, grid)
    mesh_u[gi] = t1_grid

    mesh_norm = np.empty((m, mesh_x.size))
    for k in range(1, m + 1):
        mesh_norm[k - 1] = (mesh_u if k == 1
                            else np.asarray(curves_u.value(k, mesh_u)))
    back = norm.back_map
    mesh_orig = np.asarray(back(np.clip(mesh_norm, 0.0, 1.0))) \
        if m else np.empty((0, mesh_x.size))

    sp = 1.0
    values = []
    for k in range(1, m + 1):
        sp *= 1.0 - float(mesh_norm[k - 1][-1])   # mesh ends exactly at a
        values.append((params.A1 + params.A2) * sp - params.A2)

    diagnostics = {
        "delta": delta,
        "halvings": halvings,
        "u0": u0,
        "u_at_a": float(u_at_a),
        "u_at_a0": u_grid_edge,
        "u_edge": float(u_edge),
        "x_trust": float(x_trust),
        "levels": [d.as_dict() for d in diags],
    }
    curves_grid = mesh_orig[:, gi] if m else np.empty((0, grid.size))
    table = TTable(grid, curves_grid, params, config, values,
                   mesh_x=mesh_x, mesh_curves=mesh_orig,
                   diagnostics=diagnostics, x_trust=x_trust)
    return table, values


# ---------------------------------------------------------------------------
# verification functionals
# ---------------------------------------------------------------------------

def game_value(table: TTable, a: float, k: int,
               check_tol: float | None = 1e-6) -> GameValue:
    """Value of the game with k shots at resource a, computed both ways.

    The product form multiplies the sniper's survival factors at a; the
    exponential form integrates the gunner's log-miss along curve k.  Their
    agreement is the value-level consistency check; a gap beyond
    ``check_tol`` raises ``AccuracyCheckError`` (pass None to skip).
    """
    A1, A2 = table.params.A1, table.params.A2
    if k < 0 or k > table.m:
        raise ValueError(f"k={k} outside 0..{table.m}")
    if k == 0:
        return GameValue(A1, A1, 0.0)
    if a == 0.0:
        return GameValue(-A2, -A2, 0.0)
    if not table.x_min <= a <= table.x_max * (1 + 1e-12):
        raise ValueError(f"a={a} outside the table range")
    v_prod = (A1 + A2) * table.survival_product(a, k) - A2
    expo = table.head_log_survival(k) + table.log_miss_line_integral(
        k, table.x_min, min(a, table.x_max))
    v_exp = A1 - (A1 + A2) * math.exp(expo)
    gap = abs(v_prod - v_exp)
    if check_tol is not None and gap > check_tol:
        raise AccuracyCheckError(
            f"value forms disagree by {gap:.3e} at a={a}, k={k}")
    return GameValue(float(v_prod), float(v_exp), float(gap))


def equilibrium_residual(table: TTable, x: float, k: int) -> float:
    """Defect of the equilibrium identity at (x, k) along the tabulation.

    Evaluates |exp(integral_0^x log(1 - P1(T_k))) + prod_{i<=k}(1 - P2(T_i(x))) - 1|
    with the integral's head below the coverage edge taken from the
    identity's limit there.  This is the primary correctness functional of
    the solved table.
    """
    if not 1 <= k <= table.m:
        raise ValueError(f"k={k} outside 1..{table.m}")
    if not 0.0 < x <= table.x_max * (1 + 1e-12):
        raise ValueError(f"x={x} outside (0, a]")
    x = min(x, table.x_max)
    if x <= table.x_min:
        x = table.x_min
    expo = table.head_log_survival(k) + table.log_miss_line_integral(
        k, table.x_min, x)
    return float(abs(math.exp(expo) + table.survival_product(x, k) - 1.0))
