"""Comparison methods: quantile repair of scores and prefix-fair re-ranking.

``median_repair`` maps every score to the mean of the two groups' inverse
CDFs at the candidate's in-group quantile, so the repaired marginals agree
across groups while in-group order is kept.

``fair_rerank`` is a FA*IR-style ranking: every prefix of length r must hold
at least the smallest t with BinomCDF(t; r, rho) > alpha protected
candidates. The multiple-testing correction of the original method is not
applied; ``alpha`` is used as is for every prefix.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import rankdata

from . import metrics
from .model import EmpiricalDist, Population, inverse_cdf
from .policies import Selection, raw_scores, target_count


class FairRankingError(ValueError):
    def __init__(self, msg: str, position: int, deficit: int):
        super().__init__(msg)
        self.position = position
        self.deficit = deficit


def median_repair(pop: Population, attr: str, quantile: str = "midrank") -> Population:
    """Fully repaired copy of ``pop`` (scores only; ids, groups, outcomes kept).

    ``quantile`` picks the in-group quantile of a candidate with average
    rank r in a group of size n: ``"midrank"`` uses (r - 1/2)/n, ``"rank"``
    uses r/n. Midranks place both groups' members symmetrically on the
    quantile grid, so a top-k cut of the repaired scores takes the same
    fraction of each group up to one candidate.
    """
    if quantile not in ("midrank", "rank"):
        raise ValueError(f"quantile must be 'midrank' or 'rank', got {quantile!r}")
    offset = 0.5 if quantile == "midrank" else 0.0
    g = pop.group(attr)
    repaired = np.empty_like(pop.scores)
    for j in range(pop.d):
        col = pop.scores[:, j]
        dist_in, dist_out = EmpiricalDist(col[g]), EmpiricalDist(col[~g])
        for side in (g, ~g):
            v = col[side]
            beta = np.clip((rankdata(v, method="average") - offset) / v.size, None, 1.0)
            repaired[side, j] = (inverse_cdf(dist_in, beta) + inverse_cdf(dist_out, beta)) / 2
    return pop.with_scores(repaired)


@dataclass(frozen=True)
class FairRankingConfig:
    alpha: float
    rho: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho!r}")


def binom_log_cdf(r: int, p: float) -> np.ndarray:
    """log BinomCDF(t; r, p) for t = 0..r by summing exact terms."""
    t = np.arange(r + 1)
    log_pmf = (
        gammaln(r + 1) - gammaln(t + 1) - gammaln(r - t + 1)
        + t * np.log(p) + (r - t) * np.log1p(-p)
    )
    return np.logaddexp.accumulate(log_pmf)


def required_protected(k: int, rho: float, alpha: float) -> np.ndarray:
    """Minimum protected count for every prefix length r = 1..k."""
    log_alpha = np.log(alpha)
    out = np.empty(k, dtype=np.int64)
    for r in range(1, k + 1):
        above = np.flatnonzero(binom_log_cdf(r, rho) > log_alpha)
        out[r - 1] = above[0] if above.size else r
    return out


@dataclass(frozen=True)
class FairRanking:
    ranking: np.ndarray  # candidate ids, best first
    protected: np.ndarray  # bool per ranking position
    scores: np.ndarray  # score per ranking position
    required: np.ndarray
    selection: Selection


def fair_rerank(
    pop: Population,
    w: Sequence[float],
    theta: float,
    attr: str,
    cfg: FairRankingConfig,
) -> FairRanking:
    """Top-k ranking by ``w . x`` under prefix minimum-protected constraints.

    The designated group of ``attr`` is the protected group. At each position
    the best remaining protected candidate is forced in if the prefix would
    otherwise fall short; otherwise the best remaining candidate overall is
    taken. Ties go to the lower id.
    """
    k = target_count(theta, pop.n)
    s = raw_scores(w, pop)
    g = pop.group(attr)
    ids = pop.ids
    queues = []
    for side in (g, ~g):
        idx = np.flatnonzero(side)
        queues.append(idx[np.lexsort((ids[idx], -s[idx]))])
    prot_q, other_q = queues
    need = required_protected(k, cfg.rho, cfg.alpha)

    order = np.empty(k, dtype=np.int64)
    pi = oi = 0
    for pos in range(k):
        if pi < need[pos]:
            if pi >= prot_q.size:
                raise FairRankingError(
                    f"protected pool exhausted at position {pos + 1}: "
                    f"need {need[pos]}, only {prot_q.size} protected candidates",
                    pos + 1, int(need[pos] - prot_q.size),
                )
            take_prot = True
        elif pi >= prot_q.size:
            take_prot = False
        elif oi >= other_q.size:
            take_prot = True
        else:
            a, b = prot_q[pi], other_q[oi]
            take_prot = s[a] > s[b] or (s[a] == s[b] and ids[a] < ids[b])
        if take_prot:
            order[pos] = prot_q[pi]
            pi += 1
        else:
            order[pos] = other_q[oi]
            oi += 1
    mask = np.zeros(pop.n, dtype=bool)
    mask[order] = True
    return FairRanking(ids[order], g[order], s[order], need, Selection.from_mask(pop, mask))


def compare_selections(s1: Selection, s2: Selection, pop: Population, attr: str, model=None) -> dict:
    """Set equality, per-group counts, symmetric difference and metric gaps."""
    if s1.n != pop.n or s2.n != pop.n:
        raise ValueError("selections do not belong to this population")
    g = pop.group(attr)
    c1 = (int(s1.mask[g].sum()), int(s1.mask[~g].sum()))
    c2 = (int(s2.mask[g].sum()), int(s2.mask[~g].sum()))
    diff = sorted(int(i) for i in pop.ids[s1.mask ^ s2.mask])
    out = {
        "equal": s1 == s2,
        "counts_1": c1,
        "counts_2": c2,
        "counts_equal": c1 == c2,
        "symmetric_difference": diff,
        "abs_delta_dmd": abs(metrics.dmd(s1, pop, attr) - metrics.dmd(s2, pop, attr)),
    }
    if model is not None:
        out["abs_delta_uos"] = abs(metrics.uos(s1, pop, model) - metrics.uos(s2, pop, model))
    return out
