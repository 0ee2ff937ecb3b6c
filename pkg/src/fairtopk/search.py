"""Policy search.

* :func:`search_coefficients` rotates the score weights away from the
  utility-optimal ``c`` in coordinate planes and keeps the best objective.
* :func:`search_bonus` grid-searches a single-attribute bonus over
  ``[0, b_dmd]`` with weights fixed to ``c``.
* :func:`search_bonus_multi` greedily raises one attribute's bonus at a time.
* :func:`bonus_to_quota` / :func:`quota_to_bonus` convert between the two
  equivalent policy families; :func:`min_dmd_bonus` builds the Bonus policy
  closest to zero disparity.

Every returned policy is calibrated; grid ties go to the earliest point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import metrics
from .fit import OutcomeModel
from .model import Population, group_score_dist, inverse_cdf
from .policies import (
    Bonus,
    Coefficients,
    Policy,
    Quota,
    admit,
    calibrate_bonus_binary_search,
    calibrate_topk,
    kth_score,
    quota_with_counts,
    raw_scores,
    target_count,
)


class SearchError(ValueError):
    pass


class QuotaUnreachable(SearchError):
    def __init__(self, msg: str, nearest: tuple[int, int]):
        super().__init__(msg)
        self.nearest = nearest


@dataclass
class FrontierPoint:
    """One evaluated policy of a search."""

    param: Any
    policy: Policy
    report: metrics.EvalReport


@dataclass
class SearchResult:
    policy: Policy
    report: metrics.EvalReport
    trace: list[FrontierPoint] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


def _evaluate(policy, pop, model, lambdas, attrs):
    return metrics.evaluate(admit(policy, pop), pop, model, lambdas, attrs)


def _check_lambdas(lambdas: Mapping[str, float], pop: Population):
    for a, lam in lambdas.items():
        pop.group(a)
        if lam < 0:
            raise ValueError(f"lambda for {a!r} must be non-negative")


# ---------------------------------------------------------------------------
# Coefficients: plane rotations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RotationPlan:
    """Directions are ``(i, j, sign)``: rotate from axis i towards axis j
    (``sign=+1``) or away from it (``sign=-1``) by ``step_angle`` radians,
    ``steps`` times per direction."""

    directions: tuple[tuple[int, int, int], ...]
    step_angle: float
    steps: int

    def __post_init__(self):
        dirs = tuple((int(i), int(j), int(s)) for i, j, s in self.directions)
        object.__setattr__(self, "directions", dirs)
        for i, j, s in dirs:
            if i == j:
                raise ValueError(f"rotation plane needs two distinct axes, got ({i}, {j})")
            if s not in (1, -1):
                raise ValueError("rotation sign must be +1 or -1")
        if not self.step_angle > 0:
            raise ValueError("step_angle must be > 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.step_angle * self.steps >= math.pi / 2:
            raise ValueError("step_angle * steps must stay below pi/2")

    @classmethod
    def coordinate_planes(cls, d: int, step_angle: float = 0.01, steps: int = 20) -> "RotationPlan":
        """Every coordinate plane, both orientations."""
        dirs = [(i, j, s) for i in range(d) for j in range(i + 1, d) for s in (1, -1)]
        return cls(tuple(dirs), step_angle, steps)


def rotate(w: Sequence[float], i: int, j: int, sign: int, angle: float) -> tuple[float, ...]:
    """Givens rotation in plane (i, j), then clamp to >= 0 and L1-normalise."""
    v = np.array(w, dtype=float)
    c, s = math.cos(angle), sign * math.sin(angle)
    vi, vj = v[i], v[j]
    v[i] = c * vi - s * vj
    v[j] = s * vi + c * vj
    v = np.clip(v, 0.0, None)
    total = v.sum()
    if not total > 0:
        raise SearchError("rotation left no positive weight")
    return tuple(float(x) for x in v / total)


def search_coefficients(
    pop: Population,
    model: OutcomeModel,
    theta: float,
    lambdas: Mapping[str, float],
    plan: RotationPlan,
    attrs: Sequence[str] = (),
) -> SearchResult:
    """Best calibrated Coefficients policy found by rotating ``w`` from ``c``.

    Each direction starts again from ``c``. The start policy is evaluated
    first, so the result is never worse than ``w = c``.
    """
    _check_lambdas(lambdas, pop)
    d = pop.d
    if plan.directions and d < 2:
        raise SearchError("rotations need at least two score dimensions")
    for i, j, _ in plan.directions:
        if not (0 <= i < d and 0 <= j < d):
            raise SearchError(f"rotation plane ({i}, {j}) out of range for d={d}")

    def point(param, w):
        pol = calibrate_topk(Coefficients(w), pop, theta)
        return FrontierPoint(param, pol, _evaluate(pol, pop, model, lambdas, attrs))

    best = point(("start", 0, 0.0), model.c)
    trace = [best]
    for i, j, sign in plan.directions:
        w = model.c
        for step in range(1, plan.steps + 1):
            w = rotate(w, i, j, sign, plan.step_angle)
            p = point(((i, j, sign), step, sign * step * plan.step_angle), w)
            trace.append(p)
            if p.report.objective > best.report.objective:
                best = p
    return SearchResult(best.policy, best.report, trace)


# ---------------------------------------------------------------------------
# Bonus: single attribute
# ---------------------------------------------------------------------------

def designated_disadvantaged(pop: Population, w: Sequence[float], theta: float, attr: str) -> bool:
    """Whether the designated group's admission rate under the calibrated
    Coefficients policy is at most the complement's."""
    sel = admit(calibrate_topk(Coefficients(tuple(w)), pop, theta), pop)
    inside, outside = metrics.group_rates(sel, pop, attr)
    return inside <= outside


def b_dmd(pop: Population, w: Sequence[float], theta: float, attr: str, favored: bool | None = None) -> float:
    """Bonus aligning the two groups' (1 - theta)-quantile scores.

    ``h(1-theta) - g(1-theta)`` with ``g`` the inverse CDF of the favoured
    (disadvantaged) group and ``h`` of the other one. ``favored`` defaults to
    the disadvantaged side. Clamped at 0.
    """
    if favored is None:
        favored = designated_disadvantaged(pop, w, theta, attr)
    if theta >= 1.0:
        return 0.0
    beta = 1.0 - theta
    g = inverse_cdf(group_score_dist(pop, attr, favored, w), beta)
    h = inverse_cdf(group_score_dist(pop, attr, not favored, w), beta)
    return max(h - g, 0.0)


@dataclass(frozen=True)
class BonusSearchConfig:
    k: int = 100

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("grid granularity k must be >= 1")


def bonus_grid(
    pop: Population,
    model: OutcomeModel,
    theta: float,
    lambdas: Mapping[str, float],
    attr: str,
    values: Sequence[float],
    favored: bool = True,
    w: Sequence[float] | None = None,
    attrs: Sequence[str] = (),
) -> list[FrontierPoint]:
    """Evaluate calibrated single-attribute Bonus policies at ascending ``values``.

    Thresholds come from the binary-search calibrator, each seeded with the
    previous threshold as lower bound.
    """
    _check_lambdas(lambdas, pop)
    w = tuple(model.c if w is None else w)
    k = target_count(theta, pop.n)
    tau_base = kth_score(raw_scores(w, pop), k)
    out = []
    hint = None
    prev_b = -math.inf
    for b in values:
        b = float(b)
        if b < prev_b:
            raise ValueError("bonus grid values must be ascending")
        prev_b = b
        tau = calibrate_bonus_binary_search(w, attr, b, pop, theta, tau_base, hint, favored)
        hint = tau
        pol = Bonus(w, {attr: b}, tau, k, {attr: favored})
        out.append(FrontierPoint(b, pol, _evaluate(pol, pop, model, lambdas, attrs)))
    return out


def _argmax(points: Sequence[FrontierPoint]) -> FrontierPoint:
    best = points[0]
    for p in points[1:]:
        if p.report.objective > best.report.objective:
            best = p
    return best


def search_bonus(
    pop: Population,
    model: OutcomeModel,
    theta: float,
    lambdas: Mapping[str, float] | float,
    attr: str,
    cfg: BonusSearchConfig = BonusSearchConfig(),
    attrs: Sequence[str] = (),
) -> SearchResult:
    """Grid search for the best bonus on ``attr`` with ``w = c``.

    The grid is ``{i * b_dmd / k : i = 0..k}``. If the designated group is in
    fact advantaged, the bonus goes to its complement and a note says so.
    """
    if not isinstance(lambdas, Mapping):
        lambdas = {attr: float(lambdas)}
    notes = []
    favored = designated_disadvantaged(pop, model.c, theta, attr)
    if not favored:
        notes.append(f"designated group of {attr!r} is advantaged; bonus applied to its complement")
    top = b_dmd(pop, model.c, theta, attr, favored)
    if top == 0.0:
        notes.append("b_dmd is 0: no bonus can reduce disparity, returning b = 0")
        values = [0.0]
    else:
        values = np.linspace(0.0, top, cfg.k + 1)
    trace = bonus_grid(pop, model, theta, lambdas, attr, values, favored, attrs=attrs)
    best = _argmax(trace)
    return SearchResult(best.policy, best.report, trace, notes)


# ---------------------------------------------------------------------------
# Bonus <-> Quota
# ---------------------------------------------------------------------------

def _require_calibrated(policy, pop, theta):
    k = target_count(theta, pop.n)
    if isinstance(policy, Quota):
        if policy.counts is None or sum(policy.counts) != k:
            raise SearchError("quota policy is not calibrated for this population and theta")
    elif policy.k != k:
        raise SearchError("policy is not calibrated for this population and theta")
    return k


def bonus_to_quota(policy: Bonus, pop: Population, theta: float) -> Quota:
    """Quota policy admitting exactly the candidates a calibrated Bonus admits.

    Each group keeps its own top-``count`` by raw score, with ``q`` the
    designated group's share of the ``k`` admits.
    """
    if not isinstance(policy, Bonus):
        raise TypeError("bonus_to_quota expects a Bonus policy")
    if len(policy.bonuses) != 1:
        raise SearchError("only single-attribute Bonus policies convert to a Quota; see bonus_quotas")
    _require_calibrated(policy, pop, theta)
    (attr,) = policy.bonuses
    sel = admit(policy, pop)
    g = pop.group(attr)
    k_in = int(sel.mask[g].sum())
    return quota_with_counts(policy.w, attr, pop, k_in, sel.k - k_in)


def bonus_quotas(policy: Policy, pop: Population, attrs: Sequence[str] | None = None) -> dict[str, float]:
    """Designated-group share of the admits, per attribute."""
    sel = admit(policy, pop)
    attrs = list(getattr(policy, "bonuses", {}) or pop.attribute_names) if attrs is None else attrs
    return {a: float(sel.mask[pop.group(a)].sum()) / sel.k for a in attrs}


def _outranks(a_score, a_id, o_score, o_id) -> bool:
    return a_score > o_score or (a_score == o_score and a_id < o_id)


def _group_order(s: np.ndarray, ids: np.ndarray, mask: np.ndarray):
    idx = np.flatnonzero(mask)
    order = idx[np.lexsort((ids[idx], -s[idx]))]
    return s[order], ids[order]


def quota_to_bonus(policy: Quota, pop: Population, theta: float) -> Bonus:
    """Smallest non-negative bonus whose calibrated Bonus policy admits the
    Quota policy's per-group counts (and hence the same candidates).

    With the favoured group's in-group ranking ``f_1, f_2, ...`` and the
    other group's ``o_1, o_2, ...``, the Bonus top-k equals
    ``{f_1..f_m} + {o_1..o_r}`` exactly when ``f_m + b`` outranks ``o_{r+1}``
    and ``o_r`` outranks ``f_{m+1} + b``; both boundaries are pairwise score
    differences, so the feasible bonuses form an interval starting at a
    breakpoint. When the tie rule excludes that breakpoint itself, the
    interval's midpoint is returned.
    """
    if not isinstance(policy, Quota):
        raise TypeError("quota_to_bonus expects a Quota policy")
    k = _require_calibrated(policy, pop, theta)
    attr = policy.attr
    w = policy.w
    s = raw_scores(w, pop)
    g = pop.group(attr)
    ids = pop.ids
    k_in, k_out = policy.counts

    natural = admit(calibrate_topk(Coefficients(w), pop, theta), pop)
    nat_in = int(natural.mask[g].sum())
    favored = k_in >= nat_in
    fav_mask = g if favored else ~g
    m, r = (k_in, k_out) if favored else (k_out, k_in)
    fs, fid = _group_order(s, ids, fav_mask)
    os_, oid = _group_order(s, ids, ~fav_mask)

    # lower end: f_m + b must outrank o_{r+1}
    if m == 0 or r >= os_.size:
        lo, lo_closed = 0.0, True
    else:
        lo = float(os_[r] - fs[m - 1])
        lo_closed = fid[m - 1] < oid[r]
    # upper end: o_r must outrank f_{m+1} + b
    if r == 0 or m >= fs.size:
        hi, hi_closed = math.inf, True
    else:
        hi = float(os_[r - 1] - fs[m])
        hi_closed = oid[r - 1] < fid[m]

    if lo < 0 or (lo == 0 and lo_closed):
        b = 0.0
        ok = hi > 0 or (hi == 0 and hi_closed)
    elif lo_closed:
        b = lo
        ok = lo < hi or (lo == hi and hi_closed)
    else:
        b = (lo + hi) / 2 if math.isfinite(hi) else lo + max(1.0, abs(lo))
        ok = lo < hi

    if ok and m > 0 and r < os_.size:
        # f + (o - f) can round just below o; step up to the first float that clears
        for _ in range(8):
            if _outranks(fs[m - 1] + b, fid[m - 1], os_[r], oid[r]):
                break
            b = float(np.nextafter(b, math.inf))

    bonus = calibrate_topk(Bonus(w, {attr: b}, favored={attr: favored}), pop, theta)
    got_in = int(admit(bonus, pop).mask[g].sum())
    if not ok or got_in != k_in:
        probe = calibrate_topk(Bonus(w, {attr: max(lo, 0.0)}, favored={attr: favored}), pop, theta)
        near_in = int(admit(probe, pop).mask[g].sum())
        raise QuotaUnreachable(
            f"no bonus admits {k_in}/{k_out} (designated/complement) under the tie rule; "
            f"nearest achievable is {near_in}/{k - near_in}",
            (near_in, k - near_in),
        )
    return bonus


def min_dmd_bonus(pop: Population, w: Sequence[float], theta: float, attr: str) -> Bonus:
    """Calibrated single-attribute Bonus with the smallest achievable |DmD|.

    Candidate designated-group counts are tried in order of the disparity
    they would give (ties go to the count nearer the unbonused one); the
    first count some bonus can reach wins.
    """
    k = target_count(theta, pop.n)
    g = pop.group(attr)
    n_in = int(g.sum())
    n_out = pop.n - n_in
    natural = admit(calibrate_topk(Coefficients(tuple(w)), pop, theta), pop)
    nat_in = int(natural.mask[g].sum())
    counts = range(max(0, k - n_out), min(k, n_in) + 1)
    ranked = sorted(counts, key=lambda c: (abs(c / n_in - (k - c) / n_out), abs(c - nat_in)))
    for k_in in ranked:
        quota = quota_with_counts(tuple(w), attr, pop, k_in, k - k_in)
        try:
            return quota_to_bonus(quota, pop, theta)
        except QuotaUnreachable:
            continue
    raise SearchError("no reachable designated-group count")  # unreachable: k_in = nat_in always is


# ---------------------------------------------------------------------------
# Bonus: several attributes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GreedyConfig:
    """``step`` is the bonus increment. ``patience`` bounds the look-ahead
    across flat stretches: when no single increment strictly improves the
    objective, jumps of 2, 3, ... up to ``patience`` increments are tried
    before giving up (``patience=1`` stops at the first flat step)."""

    step: float
    max_steps: int = 1000
    patience: int = 20

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("bonus increment must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


def search_bonus_multi(
    pop: Population,
    model: OutcomeModel,
    theta: float,
    lambdas: Mapping[str, float],
    cfg: GreedyConfig,
    attrs: Sequence[str] | None = None,
) -> SearchResult:
    """Greedy incremental search over per-attribute bonuses with ``w = c``.

    Starting from all bonuses at 0, each step raises the one attribute bonus
    whose increment gives the best objective, provided it strictly improves
    on the current one (earlier attributes win ties). Smaller jumps are
    always preferred over larger ones. Each attribute's bonus goes to
    whichever side is disadvantaged under ``w = c``.
    """
    _check_lambdas(lambdas, pop)
    names = list(lambdas) if attrs is None else list(attrs)
    if not names:
        raise ValueError("no attributes to search over")
    favored = {a: designated_disadvantaged(pop, model.c, theta, a) for a in names}
    notes = [
        f"designated group of {a!r} is advantaged; bonus applied to its complement"
        for a, f in favored.items() if not f
    ]

    def point(bonuses):
        pol = calibrate_topk(Bonus(model.c, bonuses, favored=favored), pop, theta)
        return FrontierPoint(dict(bonuses), pol, _evaluate(pol, pop, model, lambdas, names))

    current = point({a: 0.0 for a in names})
    trace = [current]
    for _ in range(cfg.max_steps):
        best = None
        for jump in range(1, cfg.patience + 1):
            for a in names:
                trial = dict(current.param)
                trial[a] = trial[a] + jump * cfg.step
                p = point(trial)
                if best is None or p.report.objective > best.report.objective:
                    best = p
            if best.report.objective > current.report.objective:
                break
        if best.report.objective > current.report.objective:
            current = best
            trace.append(current)
        else:
            break
    return SearchResult(current.policy, current.report, trace, notes)
