"""Outcome model fitting and synthetic population generation.

The outcome model is linear, ``m(x) = alpha0 + alpha * (c . x)`` with ``c``
non-negative and L1-normalised, so ``c`` doubles as the score weights of the
utility-optimal Coefficients policy.

Synthetic populations follow attributes -> scores -> outcome: group
membership is drawn first, then each score from a truncated normal whose mean
is shifted for every designated group the candidate belongs to, then the
outcome from the true linear model plus Gaussian noise.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from .model import Population
from .policies import check_weights, l1_normalize, top_k_mask, target_count


class FitError(ValueError):
    pass


class ClippedWeightsWarning(UserWarning):
    """Negative regression slopes were clipped to zero."""


@dataclass(frozen=True)
class OutcomeModel:
    alpha0: float
    alpha: float
    c: tuple[float, ...]

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        object.__setattr__(self, "c", check_weights(self.c))

    @property
    def slopes(self) -> np.ndarray:
        return self.alpha * np.asarray(self.c)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.alpha0 + self.alpha * (x @ np.asarray(self.c))

    def to_dict(self) -> dict:
        return {"alpha0": self.alpha0, "alpha": self.alpha, "c": list(self.c)}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "OutcomeModel":
        return cls(float(doc["alpha0"]), float(doc["alpha"]), tuple(float(v) for v in doc["c"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "OutcomeModel":
        return cls.from_dict(json.loads(text))


def fit_outcome_model(pop: Population) -> OutcomeModel:
    """OLS of observed outcomes on scores, factored into ``(alpha0, alpha, c)``.

    Negative slopes are clipped to zero (with a :class:`ClippedWeightsWarning`)
    before normalisation; the intercept is refitted with the clipped slopes
    held fixed so the model still passes through the data centroid.
    """
    obs = ~np.isnan(pop.outcome)
    n_obs = int(obs.sum())
    if n_obs < pop.d + 2:
        raise FitError(f"need at least {pop.d + 2} observed outcomes, got {n_obs}")
    x = pop.scores[obs]
    y = pop.outcome[obs]
    x_mean = x.mean(axis=0)
    y_mean = y.mean()
    xc = x - x_mean
    if np.linalg.matrix_rank(xc) < pop.d:
        raise FitError("score matrix of observed candidates is rank deficient")
    beta, *_ = np.linalg.lstsq(xc, y - y_mean, rcond=None)

    clipped = beta < 0
    if np.all(clipped | (beta == 0)):
        raise FitError("no non-negative signal: every regression slope is <= 0")
    if np.any(clipped):
        names = [pop.score_names[j] for j in np.flatnonzero(clipped)]
        warnings.warn(
            f"clipped negative slopes to zero for {', '.join(names)}",
            ClippedWeightsWarning,
            stacklevel=2,
        )
    beta = np.where(clipped, 0.0, beta)
    alpha = float(beta.sum())
    c = l1_normalize(beta)
    alpha0 = float(y_mean - x_mean @ beta)
    return OutcomeModel(alpha0, alpha, c)


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreSpec:
    name: str
    mean: float
    std: float
    lo: float = -math.inf
    hi: float = math.inf


@dataclass(frozen=True)
class AttributeSpec:
    """One binary attribute; ``shift``/``scale`` apply to its designated group."""

    name: str
    prevalence: float
    shift: tuple[float, ...]
    scale: tuple[float, ...] | None = None


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    scores: tuple[ScoreSpec, ...]
    attributes: tuple[AttributeSpec, ...]
    c: tuple[float, ...]
    alpha0: float = 0.0
    alpha: float = 1.0
    noise_std: float = 0.0
    seed: int = 0
    observe_theta: float | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        validate_config(self)


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def validate_config(cfg: GeneratorConfig) -> None:
    if not isinstance(cfg.n, int) or cfg.n < 2:
        _fail("n", f"population size must be an integer >= 2, got {cfg.n!r}")
    d = len(cfg.scores)
    if d == 0:
        _fail("scores", "at least one score is required")
    for j, s in enumerate(cfg.scores):
        if not s.std > 0:
            _fail(f"scores[{j}].std", f"must be > 0, got {s.std!r}")
        if not s.lo < s.hi:
            _fail(f"scores[{j}]", f"lo must be < hi, got [{s.lo}, {s.hi}]")
    names = [a.name for a in cfg.attributes]
    if len(set(names)) != len(names):
        _fail("attributes", "duplicate attribute name")
    for i, a in enumerate(cfg.attributes):
        if not 0 < a.prevalence < 1:
            _fail(f"attributes[{i}].prevalence", f"must lie in (0, 1), got {a.prevalence!r}")
        if len(a.shift) != d:
            _fail(f"attributes[{i}].shift", f"needs {d} entries, got {len(a.shift)}")
        if a.scale is not None:
            if len(a.scale) != d:
                _fail(f"attributes[{i}].scale", f"needs {d} entries, got {len(a.scale)}")
            if any(not v > 0 for v in a.scale):
                _fail(f"attributes[{i}].scale", "entries must be > 0")
    try:
        check_weights(cfg.c)
    except ValueError as exc:
        _fail("outcome.c", str(exc))
    if len(cfg.c) != d:
        _fail("outcome.c", f"needs {d} entries, got {len(cfg.c)}")
    if cfg.alpha < 0:
        _fail("outcome.alpha", "must be >= 0")
    if cfg.noise_std < 0:
        _fail("outcome.noise_std", "must be >= 0")
    if cfg.observe_theta is not None and not 0 < cfg.observe_theta <= 1:
        _fail("observe.theta", "must lie in (0, 1]")


def _get(doc: Mapping, key: str, path: str, default=...):
    if key in doc:
        return doc[key]
    if default is ...:
        _fail(f"{path}{key}", "missing required field")
    return default


def config_from_dict(doc: Mapping) -> GeneratorConfig:
    """Build a config from a nested mapping (as read from YAML or JSON)."""
    if not isinstance(doc, Mapping):
        raise ConfigError("config root must be a mapping")
    try:
        scores = tuple(
            ScoreSpec(
                str(_get(s, "name", f"scores[{j}].")),
                float(_get(s, "mean", f"scores[{j}].")),
                float(_get(s, "std", f"scores[{j}].")),
                float(s.get("lo", -math.inf)),
                float(s.get("hi", math.inf)),
            )
            for j, s in enumerate(_get(doc, "scores", ""))
        )
        attrs = tuple(
            AttributeSpec(
                str(_get(a, "name", f"attributes[{i}].")),
                float(_get(a, "prevalence", f"attributes[{i}].")),
                tuple(float(v) for v in _get(a, "shift", f"attributes[{i}].")),
                None if a.get("scale") is None else tuple(float(v) for v in a["scale"]),
            )
            for i, a in enumerate(_get(doc, "attributes", ""))
        )
        out = _get(doc, "outcome", "")
        observe = doc.get("observe") or {}
        return GeneratorConfig(
            n=_get(doc, "n", ""),
            scores=scores,
            attributes=attrs,
            c=tuple(float(v) for v in _get(out, "c", "outcome.")),
            alpha0=float(out.get("alpha0", 0.0)),
            alpha=float(out.get("alpha", 1.0)),
            noise_std=float(out.get("noise_std", 0.0)),
            seed=int(doc.get("seed", 0)),
            observe_theta=None if observe.get("theta") is None else float(observe["theta"]),
        )
    except (TypeError, AttributeError) as exc:
        raise ConfigError(f"malformed config: {exc}") from None


def load_generator_config(path: str) -> GeneratorConfig:
    """Read a YAML (or JSON) generator config file."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
            raise ConfigError(f"{path}: {where}{getattr(exc, 'problem', exc)}") from None
    return config_from_dict(doc)


def _truncated_normal(rng, mean: np.ndarray, std: np.ndarray, lo: float, hi: float) -> np.ndarray:
    out = rng.normal(mean, std)
    bad = (out < lo) | (out > hi)
    for _ in range(1000):
        if not bad.any():
            return out
        out[bad] = rng.normal(mean[bad], std[bad])
        bad = (out < lo) | (out > hi)
    raise ConfigError(f"truncation range [{lo}, {hi}] rejects nearly all samples")


def generate_population(cfg: GeneratorConfig) -> Population:
    """Sample a population; deterministic given ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    n, d = cfg.n, len(cfg.scores)
    groups = {a.name: rng.random(n) < a.prevalence for a in cfg.attributes}
    for name, g in groups.items():
        if g.all() or not g.any():
            raise ConfigError(
                f"attributes.{name}: sampled an empty group (n={n}); change seed or prevalence"
            )
    mean = np.tile([s.mean for s in cfg.scores], (n, 1))
    std = np.tile([s.std for s in cfg.scores], (n, 1))
    for a in cfg.attributes:
        g = groups[a.name][:, None]
        mean = mean + np.where(g, np.asarray(a.shift), 0.0)
        if a.scale is not None:
            std = std * np.where(g, np.asarray(a.scale), 1.0)
    x = np.empty((n, d))
    for j, s in enumerate(cfg.scores):
        x[:, j] = _truncated_normal(rng, mean[:, j], std[:, j], s.lo, s.hi)
    y = cfg.alpha0 + cfg.alpha * (x @ np.asarray(cfg.c))
    if cfg.noise_std > 0:
        y = y + rng.normal(0.0, cfg.noise_std, n)
    if cfg.observe_theta is not None:
        # outcome only seen for candidates admitted by the reference policy w = c*
        admitted = top_k_mask(x @ np.asarray(cfg.c), target_count(cfg.observe_theta, n))
        y = np.where(admitted, y, np.nan)
    return Population.from_arrays(
        np.arange(n), x, groups, y, [s.name for s in cfg.scores]
    )


def simple_config(
    n: int,
    d: int = 2,
    c: Sequence[float] | None = None,
    shifts: Mapping[str, Sequence[float]] | None = None,
    prevalence: float | Mapping[str, float] = 0.5,
    seed: int = 0,
    noise_std: float = 0.0,
    alpha0: float = 1.0,
    alpha: float = 0.01,
    mean: float = 500.0,
    std: float = 100.0,
) -> GeneratorConfig:
    """Convenience config: ``d`` scores on [0, 1000], one entry per attribute shift."""
    shifts = {"g": [-50.0] * d} if shifts is None else shifts
    c = [1.0 / d] * d if c is None else c
    prev = prevalence if isinstance(prevalence, Mapping) else {a: prevalence for a in shifts}
    return GeneratorConfig(
        n=n,
        scores=tuple(ScoreSpec(f"x{j + 1}", mean, std, 0.0, 1000.0) for j in range(d)),
        attributes=tuple(
            AttributeSpec(a, float(prev[a]), tuple(float(v) for v in s)) for a, s in shifts.items()
        ),
        c=tuple(c),
        alpha0=alpha0,
        alpha=alpha,
        noise_std=noise_std,
        seed=seed,
    )
