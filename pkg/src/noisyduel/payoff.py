"""Plays of the duel and the expected payoff of player I.

A play pairs the gunner's consumption path alpha(t) (piecewise linear,
nonincreasing, alpha(0) = a) with the sniper's shot schedule.  Payoff is
evaluated by processing the shots in chronological order: over each
inter-shot interval the gunner succeeds with probability

    phi = 1 - exp(-integral of log(1 - P1(tau)) d alpha(tau)),

then the shot at the interval's right end succeeds with probability
P2(shot time) conditional on both players having survived so far.
Simultaneous successes net to zero and are already encoded by this
ordering, since a continuous path places no success mass at a single
instant.

Two idealized path continuations are supported past the last breakpoint:

- ``terminal_burst``: the remaining resource is spent so that the success
  integral diverges by t = 1; success arrives with probability one just
  before the end of the game, after any shot fired strictly inside (0, 1)
  but before a shot at exactly t = 1.
- ``tail_hazard``: a finite extra success exponent contributed by an
  idealized continuation (used when a strategy tracks a tabulated curve
  down to resource levels below the table's coverage).

Both contribute only to intervals whose right endpoint is t = 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.integrate import quad

from .accuracy import AccuracyFunction, DuelParameters

if TYPE_CHECKING:  # pragma: no cover
    from .solver import TTable

_ATOL = 1e-9  # slack for validating float bookkeeping of resources/times


def single_shot_success(p: AccuracyFunction, t: float, dgamma: float) -> float:
    """Probability 1 - (1 - P(t))**dgamma of success when spending dgamma at t."""
    if dgamma < 0:
        raise ValueError(f"resource amount must be nonnegative, got {dgamma}")
    if dgamma == 0.0:
        return 0.0
    return float(-np.expm1(dgamma * p.log_miss(t)))


@dataclass(frozen=True)
class ConsumptionPath:
    """The gunner's remaining-resource function alpha(t).

    ``times``/``levels`` are the breakpoints of a piecewise-linear,
    nonincreasing path starting at t = 0; between the last breakpoint and
    t = 1 the level is constant apart from the idealized continuations
    described in the module docstring.
    """

    times: tuple
    levels: tuple
    terminal_burst: bool = False
    tail_hazard: float = 0.0

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        levels = tuple(float(v) for v in self.levels)
        if len(times) != len(levels) or not times:
            raise ValueError("need matching nonempty breakpoint arrays")
        if abs(times[0]) > _ATOL:
            raise ValueError("first breakpoint must be at t = 0")
        if any(b - a <= 0 for a, b in zip(times, times[1:])):
            raise ValueError("breakpoint times must increase strictly")
        if times[-1] > 1.0 + _ATOL:
            raise ValueError("breakpoints must not pass t = 1")
        if any(b - a > _ATOL for a, b in zip(levels, levels[1:])):
            raise ValueError("resource levels must not increase")
        if levels[-1] < -_ATOL:
            raise ValueError("resource levels must stay nonnegative")
        if self.tail_hazard < 0.0:
            raise ValueError("tail_hazard must be nonnegative")
        object.__setattr__(self, "times", (0.0,) + times[1:])
        object.__setattr__(self, "levels", levels)

    @staticmethod
    def constant(a: float) -> "ConsumptionPath":
        return ConsumptionPath((0.0,), (a,))

    @staticmethod
    def linear(a: float, t_start: float = 0.0, t_end: float = 1.0,
               a_end: float = 0.0) -> "ConsumptionPath":
        """Hold a until t_start, then spend linearly down to a_end at t_end."""
        pts = [(0.0, a)]
        if t_start > 0.0:
            pts.append((t_start, a))
        pts.append((t_end, a_end))
        times, levels = zip(*pts)
        return ConsumptionPath(times, levels)

    def alpha(self, t):
        """Remaining resource at time t (constant past the last breakpoint)."""
        return np.interp(t, self.times, self.levels)

    def spend_hazard(self, p1: AccuracyFunction, t1: float, t2: float,
                     method: str = "cached") -> float:
        """Success exponent integral of log(1 - P1) d alpha over [t1, t2].

        Nonnegative; the success probability over the window is
        1 - exp(-hazard).  ``method="quad"`` integrates each linear segment
        adaptively instead of using the curve's cached primitive; the two
        agree to about 1e-10 and the cached path is much faster.
        """
        if not 0.0 <= t1 <= t2 <= 1.0 + _ATOL:
            raise ValueError(f"need 0 <= t1 <= t2 <= 1, got [{t1}, {t2}]")
        total = 0.0
        for a, b, va, vb in zip(self.times, self.times[1:],
                                self.levels, self.levels[1:]):
            lo, hi = max(a, t1), min(b, t2)
            if hi <= lo:
                continue
            slope = (vb - va) / (b - a)
            if slope == 0.0:
                continue
            if method == "cached":
                seg = p1.log_miss_integral(lo, hi)
            elif method == "quad":
                seg, _ = quad(p1.log_miss, lo, hi, epsabs=1e-10, epsrel=1e-10)
            else:
                raise ValueError(f"unknown method {method!r}")
            total += slope * seg   # slope <= 0 and seg <= 0
        if t2 >= 1.0 and self.tail_hazard:
            total += self.tail_hazard
        return max(total, 0.0)

    def as_dict(self) -> dict:
        return {
            "breakpoints": [[t, v] for t, v in zip(self.times, self.levels)],
            "terminal_burst": self.terminal_burst,
            "tail_hazard": self.tail_hazard,
        }

    @staticmethod
    def from_dict(d: dict) -> "ConsumptionPath":
        times, levels = zip(*d["breakpoints"])
        return ConsumptionPath(times, levels,
                               terminal_burst=bool(d.get("terminal_burst", False)),
                               tail_hazard=float(d.get("tail_hazard", 0.0)))


@dataclass(frozen=True)
class SniperSchedule:
    """Shot moments in chronological (ascending) order.

    The classical reverse indexing eta_m <= ... <= eta_1 maps to this
    storage as: reverse index k corresponds to chronological position
    m + 1 - k.
    """

    moments: tuple

    def __post_init__(self):
        moments = tuple(float(t) for t in self.moments)
        if any(t < -_ATOL or t > 1.0 + _ATOL for t in moments):
            raise ValueError("shot moments must lie in [0, 1]")
        if any(b - a < -_ATOL for a, b in zip(moments, moments[1:])):
            raise ValueError("shot moments must be nondecreasing")
        object.__setattr__(self, "moments",
                           tuple(min(max(t, 0.0), 1.0) for t in moments))

    def __len__(self):
        return len(self.moments)


@dataclass(frozen=True)
class Play:
    """A realized pair (consumption path, shot schedule)."""

    path: ConsumptionPath
    schedule: SniperSchedule

    def shots_remaining(self, t: float) -> int:
        """n(t): left-continuous step function jumping down at each shot."""
        return len(self.schedule) - sum(1 for s in self.schedule.moments if s < t)

    def as_dict(self) -> dict:
        return {"path": self.path.as_dict(), "shots": list(self.schedule.moments)}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    @staticmethod
    def from_dict(d: dict) -> "Play":
        return Play(ConsumptionPath.from_dict(d["path"]),
                    SniperSchedule(tuple(d["shots"])))


def continuous_success_prob(path: ConsumptionPath, p1: AccuracyFunction,
                            t1: float, t2: float, method: str = "cached") -> float:
    """Probability that the gunner succeeds on [t1, t2] with no shot inside.

    Returns 1 exactly when the terminal burst falls inside the window
    (i.e. the window reaches t = 1 on a bursting path).
    """
    if path.terminal_burst and t2 >= 1.0 and path.levels[-1] > 0.0:
        return 1.0
    return float(-np.expm1(-path.spend_hazard(p1, t1, t2, method=method)))


def _check_consistent(play: Play, params: DuelParameters) -> None:
    if len(play.schedule) != params.m:
        raise ValueError(
            f"schedule has {len(play.schedule)} shots but m = {params.m}")
    if abs(play.path.levels[0] - params.a) > _ATOL:
        raise ValueError(
            f"path starts at {play.path.levels[0]} but a = {params.a}")


def payoff(play: Play, params: DuelParameters, method: str = "cached") -> float:
    """Expected payoff of player I for the play under the given parameters.

    Shots are processed chronologically; each interval contributes the
    gunner's continuous success, then the shot resolves, then the survivors
    carry into the next interval.  The final interval ends at t = 1 where
    the idealized continuations (burst, tail) apply.
    """
    _check_consistent(play, params)
    k_value = 0.0
    survive = 1.0
    t_prev = 0.0
    for s in play.schedule.moments:
        phi = continuous_success_prob(play.path, params.p1, t_prev, s, method)
        hit = float(params.p2(s))
        k_value += survive * (phi * params.A1 - (1.0 - phi) * hit * params.A2)
        survive *= (1.0 - phi) * (1.0 - hit)
        t_prev = s
    phi = continuous_success_prob(play.path, params.p1, t_prev, 1.0, method)
    k_value += survive * phi * params.A1
    return k_value


def split_payoff(play: Play, params: DuelParameters, t_split: float) -> float:
    """Payoff recomputed as head + survival * tail across an interior split.

    Regression identity for the chronological recursion: the result must
    equal ``payoff(play, params)`` for every split point that is not a shot
    moment.
    """
    if any(abs(s - t_split) < 1e-12 for s in play.schedule.moments):
        raise ValueError("split point must not coincide with a shot")
    head = 0.0
    survive = 1.0
    t_prev = 0.0
    for s in play.schedule.moments:
        if s > t_split:
            break
        phi = continuous_success_prob(play.path, params.p1, t_prev, s)
        hit = float(params.p2(s))
        head += survive * (phi * params.A1 - (1.0 - phi) * hit * params.A2)
        survive *= (1.0 - phi) * (1.0 - hit)
        t_prev = s
    phi_gap = continuous_success_prob(play.path, params.p1, t_prev, t_split)
    head += survive * phi_gap * params.A1
    survive *= 1.0 - phi_gap
    # tail: restart the recursion at t_split with the remaining shots
    tail = 0.0
    tail_survive = 1.0
    t_prev = t_split
    for s in play.schedule.moments:
        if s <= t_split:
            continue
        phi = continuous_success_prob(play.path, params.p1, t_prev, s)
        hit = float(params.p2(s))
        tail += tail_survive * (phi * params.A1 - (1.0 - phi) * hit * params.A2)
        tail_survive *= (1.0 - phi) * (1.0 - hit)
        t_prev = s
    phi = continuous_success_prob(play.path, params.p1, t_prev, 1.0)
    tail += tail_survive * phi * params.A1
    return head + survive * tail


def is_t_play(play: Play, table: "TTable", tol: float | None = None) -> bool:
    """Check the threshold-play property against a solved curve table.

    Wherever alpha(t) * n(t) > 0 the play must satisfy
    t <= T_{n(t)}(alpha(t)) + tol, with equality (within tol) at every
    action moment of either player.  Resource levels below the table's
    covered range are compared against the clamped table edge, where the
    true curves continue upward to 1; shots at t = 1 with the resource
    effectively exhausted are accepted on the same grounds.
    """
    tol = table.eps_t if tol is None else tol

    def threshold(n: int, x: float) -> float:
        return table.t(n, x)

    def inequality_ok(t: float, n: int, x: float) -> bool:
        if x <= table.x_min:
            return True   # true threshold lies in [table edge value, 1]
        return t <= threshold(n, x) + tol

    def equality_ok(t: float, n: int, x: float) -> bool:
        if x <= table.x_min * (1.0 + 1e-9):
            return t >= threshold(n, table.x_min) - tol
        return abs(t - threshold(n, x)) <= tol

    # sniper action moments
    for s in play.schedule.moments:
        n = play.shots_remaining(s)
        x = float(play.path.alpha(s))
        if n <= 0 or x <= 0.0:
            continue
        if not equality_ok(s, n, x):
            return False

    # gunner action moments: interiors of strictly decreasing segments,
    # sampled at endpoints and midpoints
    for a, b, va, vb in zip(play.path.times, play.path.times[1:],
                            play.path.levels, play.path.levels[1:]):
        if vb >= va:
            samples = []
        else:
            samples = [(a, va), (0.5 * (a + b), float(play.path.alpha(0.5 * (a + b)))),
                       (b, vb)]
        for t, x in samples:
            n = play.shots_remaining(t)
            if n <= 0 or x <= 0.0:
                continue
            if not equality_ok(t, n, x):
                return False

    # global inequality on a dense sample
    ts = np.unique(np.concatenate([
        np.linspace(0.0, 1.0, 201),
        np.asarray(play.path.times, dtype=float),
        np.asarray(play.schedule.moments, dtype=float),
    ]))
    for t in ts:
        n = play.shots_remaining(float(t))
        x = float(play.path.alpha(t))
        if n <= 0 or x <= 0.0:
            continue
        if not inequality_ok(float(t), n, x):
            return False
    return True


def simplest_t_plays(table: "TTable", params: DuelParameters) -> tuple[Play, Play]:
    """The two extreme threshold plays.

    Play 1: the gunner holds until the last prescribed moment and then
    bursts; the sniper fires at each prescribed moment in turn.  Play 2:
    the sniper holds every shot to t = 1; the gunner tracks the lowest
    curve's inverse from its prescribed start until exhaustion.
    """
    a, m = params.a, params.m
    if table.m < m:
        raise ValueError(f"table solved for {table.m} shots, need {m}")
    if m == 0:
        burst = ConsumptionPath((0.0,), (a,), terminal_burst=True)
        play = Play(burst, SniperSchedule(()))
        return play, play

    moments = sorted(table.t(k, a) for k in range(1, m + 1))
    path1 = ConsumptionPath((0.0, moments[-1]), (a, a), terminal_burst=True)
    play1 = Play(path1, SniperSchedule(tuple(moments)))

    times, levels, tail = table.tracking_segment(m, a, 1.0)
    path2 = ConsumptionPath((0.0,) + times, (a,) + levels, tail_hazard=tail)
    play2 = Play(path2, SniperSchedule((1.0,) * m))
    return play1, play2
