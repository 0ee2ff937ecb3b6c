"""Command-line interface.

Every command writes its outputs plus a ``<output>.manifest.json`` run record.
Outputs are staged and only committed once every file of the run has been
produced; on failure nothing is left behind and the exit status is 1.

Population CSVs need an ``id`` column. Columns holding only 0/1 values are
read as group attributes, ``outcome`` (if present) as the observed outcome,
and the remaining columns as scores unless ``--score`` names them.

Log verbosity is read from ``FAIRTOPK_LOG`` (DEBUG, INFO, WARNING, ...).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from dataclasses import replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .baselines import FairRankingConfig, compare_selections, fair_rerank, median_repair
from .fit import OutcomeModel, fit_outcome_model, generate_population, load_generator_config
from .metrics import evaluate
from .model import Population, Schema, load_population, write_population
from .policies import (
    Bonus,
    Quota,
    Selection,
    admit,
    calibrate_topk,
    dumps_policy,
    loads_policy,
)
from .search import (
    BonusSearchConfig,
    GreedyConfig,
    RotationPlan,
    b_dmd,
    bonus_grid,
    bonus_quotas,
    bonus_to_quota,
    designated_disadvantaged,
    quota_to_bonus,
    search_bonus,
    search_bonus_multi,
    search_coefficients,
)

log = logging.getLogger("fairtopk")

LOG_ENV = "FAIRTOPK_LOG"


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# Formatting
# ---------------------------------------------------------------------------

def fmt(x: Any) -> Any:
    """Fixed 9-significant-digit text for floats; other values unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.9g}"
    if isinstance(x, np.integer):
        return int(x)
    return x


def _json_ready(obj: Any) -> Any:
    """Recursively format floats for report JSON (policies and models keep full precision)."""
    if isinstance(obj, Mapping):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt(x) if not math.isfinite(x) else float(f"{x:.9g}")
    if isinstance(obj, (np.integer, np.bool_)):
        return int(obj)
    return obj


def table_text(rows: Sequence[Mapping[str, Any]], columns: Sequence[str] | None = None) -> str:
    columns = list(rows[0]) if columns is None and rows else list(columns or [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def json_text(obj: Any) -> str:
    return json.dumps(_json_ready(obj), indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# Staged outputs and manifests
# ---------------------------------------------------------------------------

def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Collects output texts, then writes them (with manifests) all at once."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args
        self.inputs: list[str] = []
        self.config: str | None = None
        self.outputs: dict[str, str] = {}
        self.extra: dict[str, Any] = {}

    def add_input(self, path: str | None):
        if path:
            self.inputs.append(path)

    def emit(self, path: str, text: str):
        if path in self.outputs:
            raise CliError(f"output path {path!r} requested twice")
        self.outputs[path] = text

    def manifest(self, out_path: str) -> dict:
        a = self.args
        lam = getattr(a, "lambda_", None) or []
        digest_src = {
            k: v for k, v in sorted(vars(a).items()) if k not in ("func",) and not callable(v)
        }
        if self.config:
            config_digest = _sha256_file(self.config)
        else:
            config_digest = hashlib.sha256(
                json.dumps(digest_src, sort_keys=True, default=str).encode()
            ).hexdigest()
        return {
            "command": self.command,
            "inputs": [{"path": p, "sha256": _sha256_file(p)} for p in self.inputs],
            "theta": getattr(a, "theta", None),
            "lambda": [{"attribute": n, "value": v} for n, v in lam],
            "seed": getattr(a, "seed", None),
            "config": self.config,
            "config_digest": config_digest,
            "output": out_path,
            "outputs": sorted(self.outputs),
            "version": __version__,
            **self.extra,
        }

    def commit(self):
        """Write every staged file via temp files; on any error remove what was written."""
        written: list[str] = []
        try:
            staged = dict(self.outputs)
            for path in self.outputs:
                staged[path + ".manifest.json"] = json.dumps(self.manifest(path), indent=2) + "\n"
            for path, text in staged.items():
                d = os.path.dirname(os.path.abspath(path))
                fd, tmp = tempfile.mkstemp(dir=d, prefix=".fairtopk-")
                try:
                    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                        fh.write(text)
                    os.replace(tmp, path)
                except BaseException:
                    if os.path.exists(tmp):
                        os.unlink(tmp)
                    raise
                written.append(path)
                log.info("wrote %s", path)
        except BaseException:
            for p in written:
                try:
                    os.unlink(p)
                except OSError:
                    pass
            raise


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------

def read_population(path: str, scores: Sequence[str] | None = None) -> Population:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise CliError(f"{path}: empty CSV, header row required")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    reserved = {"id", "outcome", *(scores or ())}
    attrs = []
    for j, h in enumerate(header):
        if h in reserved:
            continue
        values = {r[j].strip() for r in body if j < len(r)}
        if values and values <= {"0", "1"}:
            attrs.append(h)
    schema = Schema.infer(header, attrs, scores)
    return load_population(path, schema)


def read_model(args, pop: Population, run: Run) -> OutcomeModel:
    if args.model:
        run.add_input(args.model)
        try:
            with open(args.model, encoding="utf-8") as fh:
                model = OutcomeModel.loads(fh.read())
        except OSError as exc:
            raise CliError(f"cannot read {args.model}: {exc.strerror}") from None
        except (KeyError, ValueError, TypeError) as exc:
            raise CliError(f"{args.model}: malformed outcome model ({exc})") from None
        if len(model.c) != pop.d:
            raise CliError(f"{args.model}: model has {len(model.c)} weights, population has {pop.d} scores")
        return model
    if np.all(np.isnan(pop.outcome)):
        raise CliError("no outcome data in the input and no --model supplied")
    return fit_outcome_model(pop)


def read_policy(path: str, run: Run):
    run.add_input(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return loads_policy(fh.read())
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except (KeyError, ValueError, TypeError) as exc:
        raise CliError(f"{path}: malformed policy ({exc})") from None


def read_selection(path: str, pop: Population, theta: float | None, run: Run) -> Selection:
    """A policy file (admitted by its own rule) or a JSON object with ``admitted_ids``."""
    run.add_input(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from None
    if "admitted_ids" in doc:
        ids = [int(i) for i in doc["admitted_ids"]]
        missing = set(ids) - set(int(i) for i in pop.ids)
        if missing:
            raise CliError(f"{path}: ids not in the population: {sorted(missing)[:5]}")
        return Selection.from_ids(pop, ids)
    policy = loads_policy(json.dumps(doc))
    return admit(_maybe_calibrate(policy, pop, theta), pop)


def _maybe_calibrate(policy, pop, theta):
    calibrated = policy.counts is not None if isinstance(policy, Quota) else policy.k is not None
    if theta is not None:
        return calibrate_topk(policy, pop, theta)
    if not calibrated and (isinstance(policy, Quota) or math.isinf(policy.tau)):
        raise CliError("policy has no threshold or target count; pass --theta to calibrate it")
    return policy


def parse_lambdas(pairs: Iterable[tuple[str, float]], unique: bool = True) -> dict[str, float]:
    out: dict[str, float] = {}
    for name, val in pairs:
        if unique and name in out:
            raise CliError(f"--lambda given twice for {name!r}")
        out[name] = val
    return out


def _lambda_arg(text: str) -> tuple[str, float]:
    name, sep, val = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected ATTR=FLOAT, got {text!r}")
    try:
        v = float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lambda value {val!r} is not a number") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"lambda for {name!r} must be non-negative")
    return name, v


def _plane_arg(text: str) -> tuple[int, int, int]:
    parts = text.split(":")
    try:
        i, j, s = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected I:J:SIGN, got {text!r}") from None
    return i, j, s


def _theta(text: str) -> float:
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"theta must lie in (0, 1], got {text}")
    return v


def _one_attr(args, pop) -> str:
    if not args.attr:
        raise CliError("--attr is required")
    if len(args.attr) != 1:
        raise CliError("this command takes exactly one --attr")
    pop.group(args.attr[0])
    return args.attr[0]


def _report_doc(report, policy=None, notes=(), pop=None) -> dict:
    doc = report.to_dict()
    if policy is not None and pop is not None:
        doc["quota"] = bonus_quotas(policy, pop, list(report.dmd))
    if notes:
        doc["notes"] = list(notes)
    return doc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(args, run: Run):
    run.config = args.config
    run.add_input(args.config)
    cfg = load_generator_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    else:
        args.seed = cfg.seed
    pop = generate_population(cfg)
    buf = io.StringIO()
    write_population(pop, buf)
    run.emit(args.out, buf.getvalue())


def cmd_fit(args, run: Run):
    run.add_input(args.input)
    pop = read_population(args.input, args.score)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit_outcome_model(pop)
    for w in caught:
        log.warning("%s", w.message)
    run.extra["clipped"] = [str(w.message) for w in caught]
    run.emit(args.out, model.dumps())


def cmd_evaluate(args, run: Run):
    run.add_input(args.input)
    pop = read_population(args.input, args.score)
    model = read_model(args, pop, run)
    policy = _maybe_calibrate(read_policy(args.policy, run), pop, args.theta)
    lambdas = parse_lambdas(args.lambda_ or [])
    report = evaluate(admit(policy, pop), pop, model, lambdas, args.attr or ())
    if args.format == "csv":
        run.emit(args.out, table_text([report.csv_row()]))
    else:
        run.emit(args.out, json_text(_report_doc(report)))


def _emit_search(args, run, pop, result, attrs):
    run.emit(args.out, dumps_policy(result.policy, pop.score_names))
    if args.report:
        run.emit(args.report, json_text(_report_doc(result.report, result.policy, result.notes, pop)))
    for note in result.notes:
        log.warning("%s", note)


def cmd_search_coeffs(args, run: Run):
    run.add_input(args.input)
    pop = read_population(args.input, args.score)
    model = read_model(args, pop, run)
    lambdas = parse_lambdas(args.lambda_ or [])
    plan = _plan(args, pop.d)
    result = search_coefficients(pop, model, args.theta, lambdas, plan, args.attr or ())
    _emit_search(args, run, pop, result, args.attr)


def cmd_search_bonus(args, run: Run):
    run.add_input(args.input)
    pop = read_population(args.input, args.score)
    attr = _one_attr(args, pop)
    model = read_model(args, pop, run)
    lambdas = parse_lambdas(args.lambda_ or [])
    result = search_bonus(pop, model, args.theta, lambdas, attr, BonusSearchConfig(args.grid_k), [attr])
    _emit_search(args, run, pop, result, [attr])


def cmd_search_bonus_multi(args, run: Run):
    run.add_input(args.input)
    pop = read_population(args.input, args.score)
    model = read_model(args, pop, run)
    lambdas = parse_lambdas(args.lambda_ or [])
    attrs = args.attr or list(lambdas)
    cfg = GreedyConfig(args.step, args.max_steps, args.patience)
    result = search_bonus_multi(pop, model, args.theta, lambdas, cfg, attrs)
    run.extra["accepted_steps"] = len(result.trace) - 1
    _emit_search(args, run, pop, result, attrs)


def cmd_bonus_to_quota(args, run: Run):
    run.add_input(args.input)
    pop = read_population(args.input, args.score)
    policy = read_policy(args.policy, run)
    if not isinstance(policy, Bonus):
        raise CliError(f"{args.policy}: expected a bonus policy, got {policy.kind}")
    policy = calibrate_topk(policy, pop, args.theta)
    run.emit(args.out, dumps_policy(bonus_to_quota(policy, pop, args.theta), pop.score_names))


def cmd_quota_to_bonus(args, run: Run):
    run.add_input(args.input)
    pop = read_population(args.input, args.score)
    policy = read_policy(args.policy, run)
    if not isinstance(policy, Quota):
        raise CliError(f"{args.policy}: expected a quota policy, got {policy.kind}")
    policy = calibrate_topk(policy, pop, args.theta)
    run.emit(args.out, dumps_policy(quota_to_bonus(policy, pop, args.theta), pop.score_names))


def cmd_baseline_median(args, run: Run):
    run.add_input(args.input)
    pop = read_population(args.input, args.score)
    attr = _one_attr(args, pop)
    repaired = median_repair(pop, attr, args.quantile)
    buf = io.StringIO()
    write_population(repaired, buf, score_prefix="repaired_")
    run.emit(args.out, buf.getvalue())


def cmd_baseline_fair(args, run: Run):
    run.add_input(args.input)
    pop = read_population(args.input, args.score)
    attr = _one_attr(args, pop)
    if args.model:
        model = read_model(args, pop, run)
        w = model.c
    elif args.weights:
        w = tuple(args.weights)
    elif not np.all(np.isnan(pop.outcome)):
        w = read_model(args, pop, run).c
    else:
        raise CliError("score weights needed: pass --weights, --model, or an outcome column")
    fr = fair_rerank(pop, w, args.theta, attr, FairRankingConfig(args.alpha, args.rho))
    g = pop.group(attr)
    doc = {
        "attribute": attr,
        "alpha": args.alpha,
        "rho": args.rho,
        "weights": list(w),
        "k": fr.selection.k,
        "admitted_designated": int(fr.selection.mask[g].sum()),
        "admitted_complement": int(fr.selection.mask[~g].sum()),
        "required_protected": [int(t) for t in fr.required],
        "admitted_ids": sorted(int(i) for i in fr.ranking),
    }
    run.emit(args.out, json_text(doc))
    if args.ranking:
        rows = [
            {"position": p + 1, "id": int(i), "group": int(pr), "score": float(s)}
            for p, (i, pr, s) in enumerate(zip(fr.ranking, fr.protected, fr.scores))
        ]
        run.emit(args.ranking, table_text(rows, ["position", "id", "group", "score"]))


def cmd_compare(args, run: Run):
    run.add_input(args.input)
    pop = read_population(args.input, args.score)
    attr = _one_attr(args, pop)
    s1 = read_selection(args.left, pop, args.theta, run)
    s2 = read_selection(args.right, pop, args.theta, run)
    model = None
    if args.model or not np.all(np.isnan(pop.outcome)):
        model = read_model(args, pop, run)
    rep = compare_selections(s1, s2, pop, attr, model)
    run.emit(args.out, json_text(rep))


def _plan(args, d: int) -> RotationPlan:
    if args.plane:
        return RotationPlan(tuple(args.plane), args.step_angle, args.steps)
    if args.planes == "none" or d < 2:
        return RotationPlan((), args.step_angle, args.steps)
    return RotationPlan.coordinate_planes(d, args.step_angle, args.steps)


def _phi_columns(pairs):
    return [f"phi_{a}={v:g}" for a, v in pairs]


def cmd_frontier(args, run: Run):
    run.add_input(args.input)
    pop = read_population(args.input, args.score)
    model = read_model(args, pop, run)
    pairs = list(args.lambda_ or [])
    attrs = list(dict.fromkeys([*(args.attr or []), *(a for a, _ in pairs)]))
    if not attrs:
        raise CliError("--attr or --lambda is required")
    for a in attrs:
        pop.group(a)

    if args.mode == "bonus":
        attr = attrs[0]
        if len(args.attr or []) > 1:
            raise CliError("bonus frontier takes one --attr (the bonus attribute)")
        favored = designated_disadvantaged(pop, model.c, args.theta, attr)
        top = b_dmd(pop, model.c, args.theta, attr, favored)
        values = [0.0] if top == 0.0 else np.linspace(0.0, top, args.grid_k + 1)
        points = bonus_grid(pop, model, args.theta, {}, attr, values, favored, attrs=attrs)
        run.extra["b_dmd"] = top
        run.extra["bonus_group"] = "designated" if favored else "complement"
    else:
        points = search_coefficients(pop, model, args.theta, {}, _plan(args, pop.d), attrs).trace

    rows = []
    for p in points:
        rep = p.report
        row: dict[str, Any] = {}
        if args.mode == "bonus":
            row["bonus"] = p.param
        else:
            plane, step, angle = p.param
            row["plane"] = "start" if plane == "start" else "{}:{}:{}".format(*plane)
            row["step"] = step
            row["angle"] = angle
            row.update({f"w_{n}": v for n, v in zip(pop.score_names, p.policy.w)})
        row["uos"] = rep.uos
        row.update({f"dmd_{a}": rep.dmd[a] for a in attrs})
        for (a, lam), col in zip(pairs, _phi_columns(pairs)):
            row[col] = rep.uos - lam * abs(rep.dmd[a])
        row.update({f"quota_{a}": q for a, q in bonus_quotas(p.policy, pop, attrs).items()})
        rows.append(row)

    if args.format == "csv":
        run.emit(args.out, table_text(rows))
    else:
        run.emit(args.out, json_text(rows))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairtopk", description="Top-k selection policy tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_, *, input_=True, out=True, theta=False, model=False, lam=False,
            attr=False):
        sp = sub.add_parser(name, help=help_)
        if input_:
            sp.add_argument("--input", required=True, help="population CSV")
            sp.add_argument("--score", action="append", help="score column (repeatable)")
        if out:
            sp.add_argument("--out", required=True, help="output path")
        if theta:
            sp.add_argument("--theta", type=_theta, required=theta == "required",
                            help="admitted fraction in (0, 1]")
        if model:
            sp.add_argument("--model", help="outcome model JSON (default: fit on the outcome column)")
        if lam:
            sp.add_argument("--lambda", dest="lambda_", type=_lambda_arg, action="append",
                            metavar="ATTR=FLOAT", help="disparity price (repeatable)")
        if attr:
            sp.add_argument("--attr", action="append", metavar="NAME", help="attribute (repeatable)")
        sp.add_argument("--seed", type=int, help="recorded in the manifest; simulate overrides the config seed")
        sp.set_defaults(func=func)
        return sp

    sp = add("simulate", cmd_simulate, "generate a synthetic population", input_=False)
    sp.add_argument("--config", required=True, help="generator config (YAML)")

    add("fit", cmd_fit, "fit the linear outcome model")

    sp = add("evaluate", cmd_evaluate, "evaluate a policy", theta="optional", model=True, lam=True, attr=True)
    sp.add_argument("--policy", required=True)
    sp.add_argument("--format", choices=("csv", "json"), default="json")

    sp = add("search-coeffs", cmd_search_coeffs, "rotation search over score weights",
             theta="required", model=True, lam=True, attr=True)
    _rotation_flags(sp)
    sp.add_argument("--report", help="also write the best point's evaluation (JSON)")

    sp = add("search-bonus", cmd_search_bonus, "grid search for a single-attribute bonus",
             theta="required", model=True, lam=True, attr=True)
    sp.add_argument("--grid-k", type=_positive_int, default=100)
    sp.add_argument("--report", help="also write the best point's evaluation (JSON)")

    sp = add("search-bonus-multi", cmd_search_bonus_multi, "greedy search over several bonuses",
             theta="required", model=True, lam=True, attr=True)
    sp.add_argument("--step", type=float, required=True, help="bonus increment")
    sp.add_argument("--max-steps", type=_positive_int, default=1000)
    sp.add_argument("--patience", type=_positive_int, default=20)
    sp.add_argument("--report", help="also write the best point's evaluation (JSON)")

    for name, func, help_ in (
        ("bonus-to-quota", cmd_bonus_to_quota, "equivalent quota of a bonus policy"),
        ("quota-to-bonus", cmd_quota_to_bonus, "equivalent bonus of a quota policy"),
    ):
        sp = add(name, func, help_, theta="required")
        sp.add_argument("--policy", required=True)

    sp = add("baseline-median", cmd_baseline_median, "quantile-repair the scores", attr=True)
    sp.add_argument("--quantile", choices=("midrank", "rank"), default="midrank")

    sp = add("baseline-fair", cmd_baseline_fair, "prefix-fair re-ranking",
             theta="required", model=True, attr=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--rho", type=float, required=True)
    sp.add_argument("--weights", type=float, nargs="+", help="score weights (default: model c)")
    sp.add_argument("--ranking", help="also write the ranked order as CSV")

    sp = add("compare", cmd_compare, "compare two selections", theta="optional", model=True, attr=True)
    sp.add_argument("--left", required=True, help="policy JSON or JSON with admitted_ids")
    sp.add_argument("--right", required=True, help="policy JSON or JSON with admitted_ids")

    sp = add("frontier", cmd_frontier, "utility/disparity table along a search",
             theta="required", model=True, lam=True, attr=True)
    sp.add_argument("--mode", choices=("bonus", "coefficients"), default="bonus")
    sp.add_argument("--grid-k", type=_positive_int, default=100)
    _rotation_flags(sp)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _rotation_flags(sp):
    sp.add_argument("--step-angle", type=float, default=0.01, help="radians per rotation step")
    sp.add_argument("--steps", type=int, default=20, help="rotation steps per direction")
    sp.add_argument("--plane", type=_plane_arg, action="append", metavar="I:J:SIGN",
                    help="rotation direction (repeatable; default: all coordinate planes)")
    sp.add_argument("--planes", choices=("all", "none"), default="all",
                    help="directions used when no --plane is given")


def _configure_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    run = Run(args.command, args)
    try:
        args.func(args, run)
        run.commit()
    except (CliError, ValueError, KeyError, RuntimeError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"fairtopk {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
