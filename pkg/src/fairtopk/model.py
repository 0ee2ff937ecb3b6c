"""Candidates, populations and empirical score distributions.

A :class:`Population` keeps its data column-wise in read-only numpy arrays
(ids, score matrix, outcome vector, one boolean membership vector per
attribute) so that policy evaluation stays vectorised. Candidates are always
ordered by ascending id.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np


class PopulationError(ValueError):
    """Raised for invalid population data (parsing or invariant violations)."""


@dataclass(frozen=True)
class Candidate:
    id: int
    attrs: Mapping[str, bool]
    scores: tuple[float, ...]
    outcome: float | None = None


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Population:
    """Immutable, id-ordered collection of candidates.

    Every attribute must split the population into two non-empty groups:
    members of the designated group (``True``) and everyone else.
    """

    def __init__(
        self,
        candidates: Iterable[Candidate],
        attribute_names: Sequence[str],
        score_names: Sequence[str],
    ):
        cands = sorted(candidates, key=lambda c: c.id)
        d = len(score_names)
        ids = np.array([c.id for c in cands], dtype=np.int64)
        scores = np.empty((len(cands), d), dtype=float)
        for i, c in enumerate(cands):
            if len(c.scores) != d:
                raise PopulationError(
                    f"candidate {c.id} has {len(c.scores)} scores, expected {d}"
                )
            scores[i] = c.scores
        groups = {}
        for name in attribute_names:
            try:
                groups[name] = np.array([bool(c.attrs[name]) for c in cands], dtype=bool)
            except KeyError:
                raise PopulationError(f"candidate is missing attribute {name!r}") from None
        outcome = np.array(
            [np.nan if c.outcome is None else float(c.outcome) for c in cands], dtype=float
        )
        self._init_arrays(ids, scores, groups, outcome, list(score_names))
        self._candidates = tuple(cands)

    @classmethod
    def from_arrays(
        cls,
        ids: Sequence[int] | np.ndarray,
        scores: np.ndarray,
        groups: Mapping[str, Sequence[bool] | np.ndarray],
        outcome: Sequence[float] | np.ndarray | None = None,
        score_names: Sequence[str] | None = None,
    ) -> "Population":
        """Build a population from column arrays (rows need not be id-sorted).

        Missing outcomes are encoded as NaN.
        """
        ids = np.asarray(ids, dtype=np.int64)
        scores = np.asarray(scores, dtype=float)
        if scores.ndim == 1:
            scores = scores[:, None]
        n = len(ids)
        if scores.shape[0] != n:
            raise PopulationError("scores and ids have different lengths")
        if outcome is None:
            outcome = np.full(n, np.nan)
        outcome = np.asarray(outcome, dtype=float)
        if score_names is None:
            score_names = [f"x{j + 1}" for j in range(scores.shape[1])]
        order = np.argsort(ids, kind="stable")
        g = {}
        for name, col in groups.items():
            col = np.asarray(col, dtype=bool)
            if col.shape != (n,):
                raise PopulationError(f"attribute {name!r} has wrong length")
            g[name] = col[order]
        self = cls.__new__(cls)
        self._init_arrays(ids[order], scores[order], g, outcome[order], list(score_names))
        self._candidates = None
        return self

    def _init_arrays(self, ids, scores, groups, outcome, score_names):
        n = len(ids)
        if n == 0:
            raise PopulationError("population is empty")
        if scores.shape != (n, len(score_names)):
            raise PopulationError(
                f"score matrix has shape {scores.shape}, expected ({n}, {len(score_names)})"
            )
        if np.any(ids < 0):
            raise PopulationError("candidate ids must be non-negative")
        dup = ids[1:][ids[1:] == ids[:-1]]
        if dup.size:
            raise PopulationError(f"duplicate candidate id {int(dup[0])}")
        if not np.all(np.isfinite(scores)):
            raise PopulationError("scores must be finite")
        for name, col in groups.items():
            inside = int(col.sum())
            if inside == 0 or inside == n:
                side = "designated" if inside == 0 else "complement"
                raise PopulationError(f"attribute {name!r} has an empty {side} group")
        self._ids = _readonly(ids)
        self._scores = _readonly(scores)
        self._groups = {k: _readonly(v) for k, v in groups.items()}
        self._outcome = _readonly(outcome)
        self._score_names = tuple(score_names)

    # -- column access -------------------------------------------------
    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def scores(self) -> np.ndarray:
        return self._scores

    @property
    def outcome(self) -> np.ndarray:
        """Observed outcomes, NaN where unobserved."""
        return self._outcome

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(self._groups)

    @property
    def score_names(self) -> tuple[str, ...]:
        return self._score_names

    @property
    def n(self) -> int:
        return len(self._ids)

    @property
    def d(self) -> int:
        return len(self._score_names)

    def __len__(self) -> int:
        return self.n

    def group(self, attr: str) -> np.ndarray:
        """Boolean membership vector of the designated group of ``attr``."""
        try:
            return self._groups[attr]
        except KeyError:
            raise KeyError(f"unknown attribute {attr!r}") from None

    @property
    def candidates(self) -> tuple[Candidate, ...]:
        if self._candidates is None:
            names = self.attribute_names
            cands = []
            for i in range(self.n):
                y = self._outcome[i]
                cands.append(
                    Candidate(
                        id=int(self._ids[i]),
                        attrs={a: bool(self._groups[a][i]) for a in names},
                        scores=tuple(float(v) for v in self._scores[i]),
                        outcome=None if math.isnan(y) else float(y),
                    )
                )
            self._candidates = tuple(cands)
        return self._candidates

    def __iter__(self):
        return iter(self.candidates)

    def index_of(self, ids: Iterable[int]) -> np.ndarray:
        """Row positions of the given candidate ids."""
        ids = np.fromiter(ids, dtype=np.int64)
        pos = np.searchsorted(self._ids, ids)
        bad = (pos >= self.n) | (self._ids[np.minimum(pos, self.n - 1)] != ids)
        if np.any(bad):
            raise KeyError(f"unknown candidate id {int(ids[bad][0])}")
        return pos

    def with_scores(self, scores: np.ndarray, score_names: Sequence[str] | None = None) -> "Population":
        """Copy of the population with the score matrix replaced."""
        return Population.from_arrays(
            self._ids, scores, self._groups, self._outcome,
            score_names if score_names is not None else self._score_names,
        )

    def with_outcome(self, outcome: np.ndarray) -> "Population":
        return Population.from_arrays(
            self._ids, self._scores, self._groups, outcome, self._score_names
        )

    def subset(self, mask: np.ndarray) -> "Population":
        mask = np.asarray(mask, dtype=bool)
        return Population.from_arrays(
            self._ids[mask], self._scores[mask],
            {k: v[mask] for k, v in self._groups.items()},
            self._outcome[mask], self._score_names,
        )


# ---------------------------------------------------------------------------
# Empirical distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmpiricalDist:
    """Empirical distribution of a finite sample of reals."""

    sorted_values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.sort(np.asarray(self.sorted_values, dtype=float).ravel())
        if v.size == 0:
            raise ValueError("empirical distribution needs at least one value")
        object.__setattr__(self, "sorted_values", _readonly(v))

    @property
    def n(self) -> int:
        return int(self.sorted_values.size)

    def cdf(self, s):
        return empirical_cdf(self, s)

    def inv_cdf(self, beta):
        return inverse_cdf(self, beta)


def empirical_cdf(dist: EmpiricalDist, s):
    """Fraction of values ``<= s``. Vectorised over ``s``."""
    counts = np.searchsorted(dist.sorted_values, s, side="right")
    out = counts / dist.n
    return float(out) if np.ndim(out) == 0 else out


def inverse_cdf(dist: EmpiricalDist, beta):
    """Left-continuous generalised inverse: smallest value with cdf >= beta.

    ``beta`` must lie in (0, 1]. Vectorised over ``beta``.
    """
    b = np.asarray(beta, dtype=float)
    if np.any(~(b > 0.0) | (b > 1.0)):
        raise ValueError(f"beta must lie in (0, 1], got {beta!r}")
    n = dist.n
    # smallest 1-based index i with i/n >= beta, compared in the same float
    # arithmetic empirical_cdf uses (b*n can land one ulp off an integer)
    idx = np.clip(np.ceil(b * n).astype(np.int64), 1, n)
    idx = np.where((idx > 1) & ((idx - 1) / n >= b), idx - 1, idx)
    idx = np.where((idx < n) & (idx / n < b), idx + 1, idx)
    out = dist.sorted_values[idx - 1]
    return float(out) if out.ndim == 0 else out


def group_score_dist(pop: Population, attr: str, in_group: bool, w: Sequence[float]) -> EmpiricalDist:
    """Distribution of ``w . x`` over one side of an attribute's partition."""
    w = np.asarray(w, dtype=float)
    if w.shape != (pop.d,):
        raise ValueError(f"weight vector has length {w.size}, population has d={pop.d}")
    mask = pop.group(attr) == bool(in_group)
    return EmpiricalDist(pop.scores[mask] @ w)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schema:
    """Column mapping for population CSV files.

    ``labels`` optionally maps an attribute column to a pair
    ``(designated_label, other_label)``; otherwise values must be 0/1.
    """

    id_column: str = "id"
    attribute_columns: tuple[str, ...] = ()
    score_columns: tuple[str, ...] = ()
    outcome_column: str | None = None
    labels: Mapping[str, tuple[str, str]] = field(default_factory=dict)

    @classmethod
    def infer(
        cls,
        header: Sequence[str],
        attributes: Sequence[str],
        scores: Sequence[str] | None = None,
        id_column: str = "id",
        outcome_column: str = "outcome",
    ) -> "Schema":
        """Schema where every column that is not id/outcome/attribute is a score."""
        out = outcome_column if outcome_column in header else None
        if scores is None:
            reserved = {id_column, out, *attributes}
            scores = [h for h in header if h not in reserved]
        return cls(id_column, tuple(attributes), tuple(scores), out)


def _parse_attr(raw: str, col: str, labels: Mapping[str, tuple[str, str]], line: int) -> bool:
    raw = raw.strip()
    if col in labels:
        yes, no = labels[col]
        if raw == yes:
            return True
        if raw == no:
            return False
    elif raw in ("0", "1"):
        return raw == "1"
    raise PopulationError(f"line {line}: non-binary value {raw!r} in attribute column {col!r}")


def load_population(source: IO[str] | IO[bytes] | str, schema: Schema) -> Population:
    """Parse a population from CSV text, a text/bytes stream, or a path."""
    if isinstance(source, str):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_population(fh, schema)
    if isinstance(source, (io.BufferedIOBase, io.RawIOBase)) or "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8", newline="")
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise PopulationError("empty CSV: header row required") from None
    needed = [schema.id_column, *schema.attribute_columns, *schema.score_columns]
    if schema.outcome_column:
        needed.append(schema.outcome_column)
    missing = [c for c in needed if c not in header]
    if missing:
        raise PopulationError(f"missing column(s): {', '.join(missing)}")
    pos = {h: i for i, h in enumerate(header)}

    cands = []
    seen: set[int] = set()
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise PopulationError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        try:
            cid = int(row[pos[schema.id_column]])
        except ValueError:
            raise PopulationError(f"line {line}: id is not an integer") from None
        if cid < 0:
            raise PopulationError(f"line {line}: id must be non-negative")
        if cid in seen:
            raise PopulationError(f"line {line}: duplicate candidate id {cid}")
        seen.add(cid)
        attrs = {
            a: _parse_attr(row[pos[a]], a, schema.labels, line) for a in schema.attribute_columns
        }
        try:
            scores = tuple(float(row[pos[s]]) for s in schema.score_columns)
        except ValueError:
            raise PopulationError(f"line {line}: score is missing or not a number") from None
        outcome = None
        if schema.outcome_column:
            raw = row[pos[schema.outcome_column]].strip()
            if raw:
                try:
                    outcome = float(raw)
                except ValueError:
                    raise PopulationError(f"line {line}: outcome is not a number") from None
        cands.append(Candidate(cid, attrs, scores, outcome))
    return Population(cands, schema.attribute_columns, schema.score_columns)


def write_population(pop: Population, dest: IO[str] | str, score_prefix: str = "") -> None:
    """Write ``pop`` as CSV: id, attribute columns (0/1), scores, outcome.

    Floats are written with ``repr`` so that a read/write cycle is exact.
    """
    if isinstance(dest, str):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_population(pop, fh, score_prefix)
        return
    w = csv.writer(dest, lineterminator="\n")
    attrs = pop.attribute_names
    w.writerow(["id", *attrs, *(score_prefix + s for s in pop.score_names), "outcome"])
    for i in range(pop.n):
        y = pop.outcome[i]
        w.writerow([
            int(pop.ids[i]),
            *(int(pop.group(a)[i]) for a in attrs),
            *(repr(float(v)) for v in pop.scores[i]),
            "" if math.isnan(y) else repr(float(y)),
        ])
