"""Utility of selection, demographic disparity and the trade-off objective."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import Population
from .policies import Selection


def uos(selection: Selection, pop: Population, model) -> float:
    """Mean modelled outcome ``m(x)`` over the admitted candidates."""
    if selection.k == 0:
        raise ValueError("utility of an empty selection is undefined")
    return float(np.mean(model.predict(pop.scores[selection.mask])))


def group_rates(selection: Selection, pop: Population, attr: str) -> tuple[float, float]:
    """Admission rate inside and outside the designated group of ``attr``."""
    g = pop.group(attr)
    m = selection.mask
    return float(m[g].mean()), float(m[~g].mean())


def dmd(selection: Selection, pop: Population, attr: str) -> float:
    """P(T=1 | designated) - P(T=1 | complement)."""
    inside, outside = group_rates(selection, pop, attr)
    return inside - outside


def objective(uos_value: float, dmd_values: Mapping[str, float], lambdas: Mapping[str, float]) -> float:
    """``UoS - sum_i lambda_i * |DmD_i|``; attributes without a lambda weigh 0."""
    total = float(uos_value)
    for attr, lam in lambdas.items():
        if lam < 0:
            raise ValueError(f"lambda for {attr!r} must be non-negative, got {lam}")
        if lam:
            total -= lam * abs(dmd_values[attr])
    return total


@dataclass(frozen=True)
class EvalReport:
    uos: float
    dmd: Mapping[str, float]
    objective: float
    lambdas: Mapping[str, float]
    selection: Selection = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "uos": self.uos,
            "dmd": dict(self.dmd),
            "objective": self.objective,
            "lambda": dict(self.lambdas),
            "k": self.selection.k,
            "n": self.selection.n,
            "admitted_ids": [int(i) for i in self.selection.ids],
        }

    def csv_row(self, attrs: Sequence[str] | None = None) -> dict:
        """Flat record (no admitted-id list) for frontier tables."""
        attrs = list(self.dmd) if attrs is None else attrs
        row = {"uos": self.uos}
        row.update({f"dmd_{a}": self.dmd[a] for a in attrs})
        row["objective"] = self.objective
        row["k"] = self.selection.k
        return row


def evaluate(
    selection: Selection,
    pop: Population,
    model,
    lambdas: Mapping[str, float],
    attrs: Sequence[str] = (),
) -> EvalReport:
    """Score a selection; disparity is reported for every lambda key and ``attrs``."""
    names = list(dict.fromkeys([*lambdas, *attrs]))
    u = uos(selection, pop, model)
    d = {a: dmd(selection, pop, a) for a in names}
    return EvalReport(u, d, objective(u, d, lambdas), dict(lambdas), selection)
