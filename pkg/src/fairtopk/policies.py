"""Selection policies: Coefficients, Bonus and Quota.

All three score candidates with a non-negative, L1-normalised weight vector
``w``. Bonus adds a per-attribute constant to the score of the favoured group;
Quota keeps the raw score but thresholds each group separately.

Calibration targets ``k = round_half_up(theta * N)`` admissions. Ranking is by
(score descending, id ascending), and a calibrated policy records ``k`` (or the
per-group counts for Quota) so that admission is exactly ``k`` even when
several candidates share the threshold score.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from typing import ClassVar, Mapping, Sequence, Union

import numpy as np

from .model import Candidate, Population

WEIGHT_TOL = 1e-9


class CalibrationError(RuntimeError):
    """A calibration invariant was violated (should not happen on valid input)."""


def check_weights(w: Sequence[float]) -> tuple[float, ...]:
    w = tuple(float(v) for v in w)
    if not w:
        raise ValueError("weight vector is empty")
    if any(v < 0 or not math.isfinite(v) for v in w):
        raise ValueError(f"weights must be finite and non-negative: {w}")
    if abs(sum(w) - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights must sum to 1 (L1), got {sum(w)!r}")
    return w


def l1_normalize(w: Sequence[float]) -> tuple[float, ...]:
    """Scale a non-negative vector to unit L1 norm."""
    a = np.asarray(w, dtype=float)
    if np.any(a < 0):
        raise ValueError("cannot L1-normalise a vector with negative components")
    s = a.sum()
    if not s > 0:
        raise ValueError("cannot L1-normalise the zero vector")
    return tuple(float(v) for v in a / s)


def round_half_up(x: float | Decimal) -> int:
    d = x if isinstance(x, Decimal) else Decimal(repr(float(x)))
    return int(d.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def target_count(theta: float, n: int) -> int:
    if not 0 < theta <= 1:
        raise ValueError(f"theta must lie in (0, 1], got {theta!r}")
    k = round_half_up(Decimal(repr(float(theta))) * n)
    if k == 0:
        raise ValueError(f"theta={theta} selects nobody from {n} candidates")
    return k


# ---------------------------------------------------------------------------
# Policy types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Coefficients:
    w: tuple[float, ...]
    tau: float = -math.inf
    k: int | None = None

    kind: ClassVar[str] = "coefficients"

    def __post_init__(self):
        object.__setattr__(self, "w", check_weights(self.w))


@dataclass(frozen=True)
class Bonus:
    """Coefficients plus additive bonuses, one per attribute.

    ``favored[attr]`` says which side of the attribute receives the bonus:
    ``True`` (the default) is the designated group, ``False`` its complement.
    """

    w: tuple[float, ...]
    bonuses: Mapping[str, float]
    tau: float = -math.inf
    k: int | None = None
    favored: Mapping[str, bool] = field(default_factory=dict)

    kind: ClassVar[str] = "bonus"

    def __post_init__(self):
        object.__setattr__(self, "w", check_weights(self.w))
        bonuses = {a: float(b) for a, b in self.bonuses.items()}
        if any(b < 0 or not math.isfinite(b) for b in bonuses.values()):
            raise ValueError(f"bonuses must be finite and non-negative: {bonuses}")
        object.__setattr__(self, "bonuses", bonuses)
        fav = {a: bool(self.favored.get(a, True)) for a in bonuses}
        extra = set(self.favored) - set(bonuses)
        if extra:
            raise ValueError(f"favored names attributes without a bonus: {sorted(extra)}")
        object.__setattr__(self, "favored", fav)


@dataclass(frozen=True)
class Quota:
    """Per-group thresholds on ``w . x`` for one attribute.

    ``counts`` = (admitted from designated group, admitted from complement)
    is set by calibration and caps each group at exactly that many.
    """

    w: tuple[float, ...]
    attr: str
    q: float
    tau_in: float = -math.inf
    tau_out: float = -math.inf
    counts: tuple[int, int] | None = None

    kind: ClassVar[str] = "quota"

    def __post_init__(self):
        object.__setattr__(self, "w", check_weights(self.w))
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"quota q must lie in [0, 1], got {self.q!r}")


Policy = Union[Coefficients, Bonus, Quota]


@dataclass(frozen=True, eq=False)
class Selection:
    """Admitted candidates of one population, as a mask in population order."""

    mask: np.ndarray = field(repr=False)
    ids: np.ndarray

    @classmethod
    def from_mask(cls, pop: Population, mask: np.ndarray) -> "Selection":
        mask = np.asarray(mask, dtype=bool).copy()
        if mask.shape != (pop.n,):
            raise ValueError("selection mask does not match the population")
        mask.setflags(write=False)
        ids = pop.ids[mask]
        ids.setflags(write=False)
        return cls(mask, ids)

    @classmethod
    def from_ids(cls, pop: Population, ids) -> "Selection":
        mask = np.zeros(pop.n, dtype=bool)
        mask[pop.index_of(ids)] = True
        return cls.from_mask(pop, mask)

    @property
    def admitted_ids(self) -> frozenset[int]:
        return frozenset(int(i) for i in self.ids)

    @property
    def k(self) -> int:
        return int(self.ids.size)

    @property
    def n(self) -> int:
        return int(self.mask.size)

    @property
    def theta_effective(self) -> float:
        return self.k / self.n

    def __eq__(self, other):
        if not isinstance(other, Selection):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.ids, other.ids)

    def __hash__(self):
        return hash((self.n, self.ids.tobytes()))

    def __repr__(self):
        return f"Selection(k={self.k}, n={self.n})"


# ---------------------------------------------------------------------------
# Scoring and admission
# ---------------------------------------------------------------------------

def _check_dim(w, d):
    if len(w) != d:
        raise ValueError(f"policy has {len(w)} weights but candidates have {d} scores")


def selection_score(policy: Policy, cand: Candidate) -> float:
    _check_dim(policy.w, len(cand.scores))
    s = float(np.dot(policy.w, cand.scores))
    if isinstance(policy, Bonus):
        for attr, b in policy.bonuses.items():
            if bool(cand.attrs[attr]) == policy.favored[attr]:
                s += b
    return s


def raw_scores(w: Sequence[float], pop: Population) -> np.ndarray:
    _check_dim(w, pop.d)
    return pop.scores @ np.asarray(w, dtype=float)


def bonus_vector(pop: Population, bonuses: Mapping[str, float], favored: Mapping[str, bool] | None = None) -> np.ndarray:
    """Per-candidate total bonus."""
    total = np.zeros(pop.n)
    for attr, b in bonuses.items():
        side = True if favored is None else favored.get(attr, True)
        total += np.where(pop.group(attr) == side, float(b), 0.0)
    return total


def policy_scores(policy: Policy, pop: Population) -> np.ndarray:
    """Vectorised :func:`selection_score` over a population."""
    s = raw_scores(policy.w, pop)
    if isinstance(policy, Bonus):
        s = s + bonus_vector(pop, policy.bonuses, policy.favored)
    return s


def rank_order(scores: np.ndarray) -> np.ndarray:
    """Row order by score descending, then id ascending.

    Population rows are id-sorted, so a stable sort on ``-scores`` suffices.
    """
    return np.argsort(-np.asarray(scores, dtype=float), kind="stable")


def _top(scores: np.ndarray, eligible: np.ndarray, cap: int | None) -> np.ndarray:
    mask = eligible.copy()
    if cap is not None and mask.sum() > cap:
        order = rank_order(scores)
        order = order[eligible[order]][:cap]
        mask = np.zeros_like(eligible)
        mask[order] = True
    return mask


def admit(policy: Policy, pop: Population) -> Selection:
    """Admit candidates whose score reaches the applicable threshold.

    A calibrated policy additionally admits at most ``k`` (per group for
    Quota), taken in rank order.
    """
    s = policy_scores(policy, pop)
    if isinstance(policy, Quota):
        g = pop.group(policy.attr)
        caps = policy.counts or (None, None)
        inside = _top(s, g & (s >= policy.tau_in), caps[0])
        outside = _top(s, ~g & (s >= policy.tau_out), caps[1])
        return Selection.from_mask(pop, inside | outside)
    return Selection.from_mask(pop, _top(s, s >= policy.tau, policy.k))


def top_k_mask(scores: np.ndarray, k: int) -> np.ndarray:
    mask = np.zeros(len(scores), dtype=bool)
    mask[rank_order(scores)[:k]] = True
    return mask


def kth_score(scores: np.ndarray, k: int) -> float:
    """Score of the k-th ranked candidate (+inf for k == 0)."""
    if k == 0:
        return math.inf
    return float(scores[rank_order(scores)[k - 1]])


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

def quota_counts(q: float, k: int, n_in: int, n_out: int) -> tuple[int, int]:
    k_in = round_half_up(Decimal(repr(float(q))) * k)
    k_out = k - k_in
    if k_in > n_in or k_out > n_out:
        raise ValueError(
            f"quota q={q} needs {k_in}/{k_out} admits but the groups have {n_in}/{n_out} members"
        )
    return k_in, k_out


def quota_with_counts(w, attr: str, pop: Population, k_in: int, k_out: int) -> Quota:
    """Quota admitting each group's top ``k_in`` / ``k_out`` by raw score."""
    s = raw_scores(w, pop)
    g = pop.group(attr)
    tau_in = kth_score(s[g], k_in)
    tau_out = kth_score(s[~g], k_out)
    k = k_in + k_out
    return Quota(tuple(w), attr, k_in / k, tau_in, tau_out, (k_in, k_out))


def calibrate_topk(policy: Policy, pop: Population, theta: float) -> Policy:
    """Set thresholds so that exactly ``round_half_up(theta * N)`` are admitted.

    Coefficients and Bonus get ``tau`` = k-th ranked score; Quota splits ``k``
    into ``round_half_up(q * k)`` designated admits and the rest, and sets
    each group's threshold to its own count-th ranked raw score.
    """
    k = target_count(theta, pop.n)
    if isinstance(policy, Quota):
        g = pop.group(policy.attr)
        k_in, k_out = quota_counts(policy.q, k, int(g.sum()), int((~g).sum()))
        cal = quota_with_counts(policy.w, policy.attr, pop, k_in, k_out)
        return replace(cal, q=policy.q)
    s = policy_scores(policy, pop)
    return replace(policy, tau=kth_score(s, k), k=k)


def calibrate_bonus_binary_search(
    w: Sequence[float],
    attr: str,
    b: float,
    pop: Population,
    theta: float,
    tau_base: float,
    tau_hint: float | None = None,
    favored: bool = True,
) -> float:
    """Threshold of the calibrated single-attribute Bonus policy.

    Binary search over the distinct bonus-adjusted scores lying in
    ``[max(tau_base, tau_hint), tau_base + b]`` for the largest threshold that
    still admits at least ``k`` candidates. ``tau_base`` is the calibrated
    Coefficients threshold for ``w``; ``tau_hint`` a calibrated threshold for
    a smaller bonus. The result equals the k-th ranked adjusted score.
    """
    if b < 0:
        raise ValueError("bonus must be non-negative")
    k = target_count(theta, pop.n)
    s = raw_scores(w, pop) + np.where(pop.group(attr) == favored, float(b), 0.0)
    lo = tau_base if tau_hint is None else max(tau_base, tau_hint)
    hi = tau_base + b
    asc = np.sort(s)
    cands = np.unique(asc[(asc >= lo) & (asc <= hi)])

    def admits(t):
        return s.size - np.searchsorted(asc, t, side="left")

    if cands.size == 0 or admits(cands[0]) < k:
        raise CalibrationError(
            f"no threshold in [{lo}, {hi}] admits {k} candidates (bonus {b})"
        )
    left, right = 0, cands.size - 1
    while left < right:
        mid = (left + right + 1) // 2
        if admits(cands[mid]) >= k:
            left = mid
        else:
            right = mid - 1
    return float(cands[left])


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _enc(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _dec(x) -> float:
    return float(x)


def policy_to_dict(policy: Policy, score_names: Sequence[str] | None = None) -> dict:
    names = list(score_names) if score_names is not None else [f"x{j + 1}" for j in range(len(policy.w))]
    if len(names) != len(policy.w):
        raise ValueError("score_names do not match the weight vector")
    doc: dict = {"kind": policy.kind, "score_names": names, "weights": list(policy.w)}
    if isinstance(policy, Quota):
        doc["quota"] = {
            "attribute": policy.attr,
            "q": policy.q,
            "threshold_designated": _enc(policy.tau_in),
            "threshold_complement": _enc(policy.tau_out),
            "count_designated": None if policy.counts is None else policy.counts[0],
            "count_complement": None if policy.counts is None else policy.counts[1],
        }
        return doc
    doc["threshold"] = _enc(policy.tau)
    doc["k"] = policy.k
    if isinstance(policy, Bonus):
        doc["bonuses"] = {
            a: {"value": b, "group": "designated" if policy.favored[a] else "complement"}
            for a, b in policy.bonuses.items()
        }
    return doc


def policy_from_dict(doc: Mapping) -> Policy:
    kind = doc.get("kind")
    w = tuple(float(v) for v in doc["weights"])
    if kind == "coefficients":
        return Coefficients(w, _dec(doc["threshold"]), doc.get("k"))
    if kind == "bonus":
        bon = doc["bonuses"]
        return Bonus(
            w,
            {a: float(v["value"]) for a, v in bon.items()},
            _dec(doc["threshold"]),
            doc.get("k"),
            {a: v.get("group", "designated") == "designated" for a, v in bon.items()},
        )
    if kind == "quota":
        qd = doc["quota"]
        counts = None
        if qd.get("count_designated") is not None:
            counts = (int(qd["count_designated"]), int(qd["count_complement"]))
        return Quota(
            w, qd["attribute"], float(qd["q"]),
            _dec(qd["threshold_designated"]), _dec(qd["threshold_complement"]), counts,
        )
    raise ValueError(f"unknown policy kind {kind!r}")


def dumps_policy(policy: Policy, score_names: Sequence[str] | None = None) -> str:
    return json.dumps(policy_to_dict(policy, score_names), indent=2) + "\n"


def loads_policy(text: str) -> Policy:
    return policy_from_dict(json.loads(text))
