"""Command-line front end: ``linsec {gen,train,attack,compare,selftest}``.

Every option can come from a JSON config file (``--config``) whose keys match
the flag names with dashes replaced by underscores; explicit flags win over
the file. Output files are written under ``--out`` with fixed names::

    model.json      trained model (train)
    summary.json    report of the command
    campaign.jsonl  one record per attacked sample and budget (attack)
    curve_<reg>.csv security curve, with a JSON sidecar curve_<reg>.json

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import attacks as atk
from .core import Dataset, DimensionError, FeatureCaps, LinearModel, RegKind, caps_from_training
from .data import (
    DataError,
    SynthSpec,
    generate,
    load_csv,
    load_idx,
    load_sparse,
    save_csv,
    save_sparse,
    split,
    subsample,
)
from .metrics import SecurityCurve, security_curve
from .regularizers import NormKind, RegularizerSpec, norm
from .training import (
    DEFAULT_C,
    DEFAULT_MIX,
    RobustCheckSpec,
    SelectionConfig,
    SolverSettings,
    TrainConfig,
    TrainingError,
    cross_validate,
    default_grid,
    fit,
    hinge_loss,
    worst_case_hinge,
)

log = logging.getLogger("linsec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # global
    seed: int = 0
    out: str = "out"
    threads: int = 1
    repetitions: int = 1
    # data source: a file, or synthetic data when ``data`` is unset
    data: str | None = None
    format: str = "csv"
    labels: str | None = None
    label_column: int = 0
    has_header: bool = False
    n_features: int | None = None
    class_pos: int = 9
    class_neg: int = 8
    scale: float = 1.0
    per_class: int | None = None
    synth_kind: str = "boolean_text"
    synth_d: int = 200
    synth_m: int = 500
    separation: float = 2.0
    informative: float = 0.5
    train_fraction: float = 0.5
    # training
    regularizer: str = "l2"
    regularizers: list[str] = field(default_factory=lambda: [k.value for k in RegKind])
    C: float = 1.0
    lam: float = 0.5
    rho: float = 0.5
    cv: bool = False
    grid_C: list[float] = field(default_factory=lambda: list(DEFAULT_C))
    grid_mix: list[float] = field(default_factory=lambda: list(DEFAULT_MIX))
    alpha: float = 0.1
    beta: float = 0.1
    folds: int = 5
    solver: str = "primal_dual"
    max_iters: int = 20000
    tol: float = 1e-4
    step0: float = 1.0
    # attack
    model: str | None = None
    attack: str = "boolean"
    cost: str | None = None
    budgets: list[float] = field(default_factory=lambda: [float(b) for b in range(11)])
    integral: bool = False
    pgd_steps: int = 100
    fpr_cap: float = 0.1

    def __post_init__(self):
        if self.repetitions < 1:
            raise UsageError("repetitions must be >= 1")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        b = [float(v) for v in self.budgets]
        if not b or any(v < 0 for v in b) or any(y <= x for x, y in zip(b, b[1:])):
            raise UsageError("budgets must be a non-empty, strictly increasing list of values >= 0")
        if self.format not in ("csv", "sparse", "idx"):
            raise UsageError(f"unknown data format {self.format!r}")
        if self.attack not in ATTACK_NAMES:
            raise UsageError(f"unknown attack {self.attack!r}; choose from {sorted(ATTACK_NAMES)}")
        for r in [self.regularizer, *self.regularizers]:
            if r not in {k.value for k in RegKind}:
                raise UsageError(f"unknown regularizer {r!r}")

    @classmethod
    def resolve(cls, file_values, flag_values):
        known = {f.name for f in fields(cls)}
        unknown = set(file_values) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged = {**file_values, **flag_values}
        try:
            return cls(**merged)
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from exc

    def to_dict(self):
        return dataclasses.asdict(self)


ATTACK_NAMES = ("boolean", "sparse_l1", "dense_l2", "increment_only", "pgd")


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _flag_type(tp):
    """argparse type/kwargs for a dataclass field annotation string."""
    if tp.startswith("list[float]"):
        return {"type": lambda s: [float(v) for v in s.split(",") if v]}
    if tp.startswith("list[str]"):
        return {"type": lambda s: [v for v in s.split(",") if v]}
    if tp == "bool":
        return {"action": argparse.BooleanOptionalAction}
    base = tp.split("|")[0].strip()
    return {"type": {"int": int, "float": float, "str": str}[base]}


def _add_config_flags(parser, names):
    hints = {f.name: f.type for f in fields(ExperimentConfig)}
    for name in names:
        kwargs = _flag_type(hints[name])
        parser.add_argument("--" + name.replace("_", "-"), dest=name,
                            default=argparse.SUPPRESS, **kwargs)


_GLOBAL = ["seed", "out", "threads"]
_DATA = ["data", "format", "labels", "label_column", "has_header", "n_features", "class_pos",
         "class_neg", "scale", "per_class", "synth_kind", "synth_d", "synth_m", "separation",
         "informative"]
_SOLVER = ["C", "lam", "rho", "cv", "grid_C", "grid_mix", "alpha", "beta", "folds", "solver",
           "max_iters", "tol", "step0"]
_ATTACK = ["attack", "cost", "budgets", "integral", "pgd_steps", "fpr_cap", "repetitions"]


def build_parser():
    parser = _Parser(prog="linsec", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config file; flags override it")
    common.add_argument("-v", "--verbose", action="store_true")
    _add_config_flags(common, _GLOBAL)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", parents=[common], help="write a synthetic dataset")
    _add_config_flags(p, ["synth_kind", "synth_d", "synth_m", "separation", "informative", "format"])

    p = sub.add_parser("train", parents=[common], help="train one model")
    _add_config_flags(p, _DATA + ["regularizer"] + _SOLVER)

    p = sub.add_parser("attack", parents=[common], help="attack a trained model")
    _add_config_flags(p, _DATA + ["model"] + _ATTACK + ["train_fraction"])

    p = sub.add_parser("compare", parents=[common], help="security curves for several regularizers")
    _add_config_flags(p, _DATA + ["regularizers", "train_fraction"] + _SOLVER + _ATTACK)

    sub.add_parser("selftest", parents=[common], help="run the oracle equivalence suites")
    return parser


# ---------------------------------------------------------------------------
# helpers


def _dump(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(out, name, text):
    path = Path(out) / name
    path.write_text(text)
    return path


def _load_data(cfg):
    if cfg.data is None:
        spec = SynthSpec(seed=cfg.seed, d=cfg.synth_d, m_per_class=cfg.synth_m,
                         kind=cfg.synth_kind, separation=cfg.separation,
                         informative=cfg.informative)
        data = generate(spec)
    elif cfg.format == "csv":
        data = load_csv(cfg.data, cfg.label_column, cfg.has_header)
    elif cfg.format == "sparse":
        data = load_sparse(cfg.data, cfg.n_features)
    else:
        if cfg.labels is None:
            raise UsageError("IDX data needs --labels pointing at the label file")
        data = load_idx(cfg.data, cfg.labels, cfg.class_pos, cfg.class_neg, cfg.scale)
    if cfg.per_class is not None:
        data = subsample(data, cfg.per_class, cfg.seed)
    return data


def _spec_for(kind, cfg):
    kind = RegKind(kind)
    if kind is RegKind.ELNET:
        return RegularizerSpec(kind, cfg.lam)
    if kind is RegKind.OCT:
        return RegularizerSpec(kind, cfg.rho)
    return RegularizerSpec(kind)


def _solver(cfg):
    return SolverSettings(max_iters=cfg.max_iters, step0=cfg.step0, tol=cfg.tol,
                          seed=cfg.seed, method=cfg.solver)


def _train_one(data, kind, cfg, seed):
    """Fixed hyperparameters, or cross-validated ones when ``cfg.cv``."""
    solver = _solver(cfg)
    selection = None
    if cfg.cv:
        grid = default_grid([kind], cfg.grid_C, cfg.grid_mix, solver)
        sel = SelectionConfig(grid, cfg.alpha, cfg.beta, cfg.folds, 1, seed)
        tcfg, diag = cross_validate(data, sel, threads=cfg.threads)
        selection = {"selected": tcfg.to_dict(), "candidates": diag["candidates"]}
    else:
        tcfg = TrainConfig(cfg.C, _spec_for(kind, cfg), solver)
    result = fit(data, tcfg)
    if not np.all(np.isfinite(result.model.weights)):
        raise NumericFailure("training produced non-finite weights")
    return result, tcfg, selection


def _attack_setup(cfg, data, caps_source):
    """(attack function, spec template) for the configured attack."""
    name = cfg.attack
    meta = data.meta
    if name == "boolean":
        if not np.all(meta.boolean):
            raise DataError("boolean attack needs every feature flagged boolean")
        return atk.attack_boolean, atk.AttackSpec(0.0, "l1", atk.BooleanFlip())
    if name == "increment_only":
        caps = caps_from_training(caps_source)
        return atk.attack_increment_only, atk.AttackSpec(
            0.0, "l1", atk.IncrementOnly(caps, cfg.integral))
    box = atk.Box.from_meta(meta)
    if name == "sparse_l1":
        return atk.attack_sparse_l1, atk.AttackSpec(0.0, "l1", box)
    if name == "dense_l2":
        return atk.attack_dense_l2, atk.AttackSpec(0.0, "l2", box)
    steps = cfg.pgd_steps

    def pgd(model, x0, spec):
        return atk.attack_pgd(model, x0, spec, steps=steps)

    pgd.kind = "pgd"
    return pgd, atk.AttackSpec(0.0, cfg.cost or "l2", box)


def _curve(model, test, op, template, cfg):
    return security_curve(model, test, op, template, cfg.budgets, cfg.fpr_cap,
                          threads=cfg.threads, keep_records=True)


def _save_curve(out, stem, curve):
    curve.save(Path(out) / f"{stem}.csv", Path(out) / f"{stem}.json")


def _mean_curve(curves):
    first = curves[0]
    return SecurityCurve(first.budgets, tuple(np.mean([c.auc10 for c in curves], axis=0)),
                         float(np.mean([c.S for c in curves])),
                         float(np.mean([c.E for c in curves])), first.attack_kind, first.fpr_cap)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(cfg):
    spec = SynthSpec(seed=cfg.seed, d=cfg.synth_d, m_per_class=cfg.synth_m,
                     kind=cfg.synth_kind, separation=cfg.separation, informative=cfg.informative)
    data = generate(spec)
    if cfg.format == "sparse":
        name = "data.txt"
        save_sparse(data, Path(cfg.out) / name)
    elif cfg.format == "csv":
        name = "data.csv"
        save_csv(data, Path(cfg.out) / name)
    else:
        raise UsageError("gen writes csv or sparse data")
    _write(cfg.out, "summary.json", _dump({
        "command": "gen", "file": name, "m": data.m, "d": data.d,
        "synth": {"kind": spec.kind.value, "seed": spec.seed, "d": spec.d,
                  "m_per_class": spec.m_per_class, "separation": spec.separation,
                  "informative": spec.informative},
    }))
    return EXIT_OK


def cmd_train(cfg):
    data = _load_data(cfg)
    result, tcfg, selection = _train_one(data, cfg.regularizer, cfg, cfg.seed)
    result.model.save(Path(cfg.out) / "model.json")
    summary = {"command": "train", "m": data.m, "d": data.d, "config": tcfg.to_dict(),
               "report": result.report()}
    if selection is not None:
        summary["selection"] = selection
    _write(cfg.out, "summary.json", _dump(summary))
    print(_dump(summary["report"]), end="")
    return EXIT_OK


def cmd_attack(cfg):
    if cfg.model is None:
        raise UsageError("attack needs --model")
    try:
        model = LinearModel.load(cfg.model)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read model {cfg.model}: {exc}") from exc
    data = _load_data(cfg)
    if data.d != model.d:
        raise DimensionError(f"model has {model.d} weights but data has {data.d} features")
    op, template = _attack_setup(cfg, data, data)
    reg = model.regularizer.value
    curves, records = [], []
    for rep in range(cfg.repetitions):
        # repeated runs evaluate on seed-varied stratified subsets
        test = data if cfg.repetitions == 1 else split(data, cfg.train_fraction, cfg.seed + rep)[0]
        curve = _curve(model, test, op, template, cfg)
        curves.append(curve)
        suffix = "" if cfg.repetitions == 1 else f"_rep{rep}"
        lines = atk.campaign_records(curve.records)
        _write(cfg.out, f"campaign{suffix}.jsonl", lines)
        if cfg.repetitions > 1:
            _save_curve(cfg.out, f"curve_{reg}{suffix}", curve)
        records.append(len(curve.records))
    mean = curves[0] if cfg.repetitions == 1 else _mean_curve(curves)
    _save_curve(cfg.out, f"curve_{reg}", mean)
    if cfg.repetitions > 1:
        _write(cfg.out, "campaign.jsonl", "".join(
            (Path(cfg.out) / f"campaign_rep{r}.jsonl").read_text() for r in range(cfg.repetitions)))
    summary = {"command": "attack", "attack": template_kind(op), "budgets": list(mean.budgets),
               "auc10": list(mean.auc10), "S": mean.S, "E": mean.E,
               "repetitions": cfg.repetitions, "records": records}
    _write(cfg.out, "summary.json", _dump(summary))
    return EXIT_OK


def template_kind(op):
    return getattr(op, "kind", "attack")


def cmd_compare(cfg):
    if len(cfg.regularizers) < 2:
        raise UsageError("compare needs at least two regularizers")
    if len(set(cfg.regularizers)) != len(cfg.regularizers):
        raise UsageError("regularizers must be distinct")
    data = _load_data(cfg)
    per_reg = {r: [] for r in cfg.regularizers}
    reps = []
    for rep in range(cfg.repetitions):
        train_set, test_set = split(data, cfg.train_fraction, cfg.seed + rep)
        if test_set is None:
            raise UsageError("compare needs train_fraction < 1 to leave a test set")
        op, template = _attack_setup(cfg, test_set, train_set)
        rep_rows = {}
        for reg in cfg.regularizers:
            result, tcfg, _ = _train_one(train_set, reg, cfg, cfg.seed + rep)
            if not np.any(result.model.weights != 0.0):
                raise NumericFailure(f"{reg} model has all-zero weights; lower regularization")
            curve = _curve(result.model, test_set, op, template, cfg)
            per_reg[reg].append(curve)
            if cfg.repetitions > 1:
                _save_curve(cfg.out, f"curve_{reg}_rep{rep}", curve)
            rep_rows[reg] = {"config": tcfg.to_dict(), "S": curve.S, "E": curve.E,
                             "auc10": list(curve.auc10), "converged": result.converged,
                             "iters": result.iters}
        reps.append(rep_rows)

    table = []
    for reg, curves in per_reg.items():
        mean = curves[0] if len(curves) == 1 else _mean_curve(curves)
        _save_curve(cfg.out, f"curve_{reg}", mean)
        clean = float(np.mean([
            c.auc10[0] if c.budgets[0] == 0 else float("nan") for c in curves]))
        table.append({"regularizer": reg, "S_pct": 100.0 * mean.S, "E_pct": 100.0 * mean.E,
                      "clean_auc10_pct": 100.0 * clean if np.isfinite(clean) else None})
    summary = {"command": "compare", "attack": template_kind(op), "budgets": [float(b) for b in cfg.budgets],
               "repetitions": cfg.repetitions, "table": table, "runs": reps}
    _write(cfg.out, "summary.json", _dump(summary))
    text = _format_table(table)
    _write(cfg.out, "table.txt", text)
    print(text, end="")
    return EXIT_OK


def _format_table(rows):
    lines = [f"{'regularizer':<12}{'S%':>8}{'E%':>8}{'AUC10%':>9}"]
    for r in rows:
        auc = "n/a" if r["clean_auc10_pct"] is None else f"{r['clean_auc10_pct']:.1f}"
        lines.append(f"{r['regularizer']:<12}{r['S_pct']:>8.1f}{r['E_pct']:>8.1f}{auc:>9}")
    return "\n".join(lines) + "\n"


# --- self test ---------------------------------------------------------------


def _selftest_suites(rng, n=200):
    """Yield (suite name, failures, trials) for each oracle comparison."""

    def model(d):
        return LinearModel(rng.normal(size=d), float(rng.normal()), RegKind.L2, {"C": 1.0})

    fails = 0
    for _ in range(n):
        d = int(rng.integers(2, 13))
        m = model(d)
        x0 = (rng.random(d) < 0.5).astype(float)
        spec = atk.AttackSpec(int(rng.integers(0, 4)), "l1", atk.BooleanFlip())
        if atk.attack_boolean(m, x0, spec).g_after != atk.attack_bruteforce(m, x0, spec).g_after:
            fails += 1
    yield "boolean greedy vs exhaustive", fails, n

    fails = 0
    for _ in range(n):
        d = int(rng.integers(2, 7))
        m = model(d)
        lo = -rng.random(d) * 2
        hi = rng.random(d) * 2
        x0 = lo + rng.random(d) * (hi - lo)
        spec = atk.AttackSpec(float(rng.random() * 3), "l1", atk.Box(lo, hi))
        a = atk.attack_sparse_l1(m, x0, spec).g_after
        b = atk.attack_bruteforce(m, x0, spec).g_after
        fails += abs(a - b) > 1e-6
    yield "sparse l1 greedy vs vertex enumeration", fails, n

    fails = 0
    for _ in range(n):
        d = int(rng.integers(2, 7))
        m = model(d)
        caps = FeatureCaps(rng.random(d) * 3)
        x0 = caps.caps * rng.random(d)
        spec = atk.AttackSpec(float(rng.random() * 3), "l1", atk.IncrementOnly(caps))
        a = atk.attack_increment_only(m, x0, spec).g_after
        b = atk.attack_bruteforce(m, x0, spec).g_after
        fails += abs(a - b) > 1e-6
    yield "increment-only greedy vs vertex enumeration", fails, n

    fails = 0
    for _ in range(n // 2):
        m = model(10)
        x0 = rng.normal(size=10)
        spec = atk.AttackSpec(float(rng.random() * 3), "l2")
        a = atk.attack_dense_l2(m, x0, spec).g_after
        b = atk.attack_pgd(m, x0, spec).g_after
        fails += abs(a - b) > 1e-4
    yield "dense l2 closed form vs projected gradient", fails, n // 2

    fails = 0
    for _ in range(n // 2):
        d = int(rng.integers(2, 6))
        X = rng.normal(size=(8, d))
        y = np.where(rng.random(8) < 0.5, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        data = Dataset(X, y)
        m = model(d)
        chk = RobustCheckSpec(float(rng.random() * 2 + 1e-3), NormKind(rng.choice(["l1", "l2", "linf"])))
        slack = 1.0 - y * (X @ m.weights + m.bias)
        if not np.any(slack > 0):
            continue
        expect = hinge_loss(m, data) + chk.c * norm(chk.norm, m.weights)
        fails += abs(worst_case_hinge(m, data, chk) - expect) > 1e-9 * max(1.0, abs(expect))
    yield "robust hinge identity", fails, n // 2


def cmd_selftest(cfg):
    rng = np.random.default_rng(cfg.seed)
    results = []
    ok = True
    for name, fails, total in _selftest_suites(rng):
        status = "PASS" if fails == 0 else "FAIL"
        ok = ok and fails == 0
        print(f"{status}  {name}: {total - fails}/{total}")
        results.append({"suite": name, "failures": int(fails), "trials": int(total)})
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    _write(cfg.out, "summary.json", _dump({"command": "selftest", "suites": results, "passed": ok}))
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "attack": cmd_attack,
            "compare": cmd_compare, "selftest": cmd_selftest}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        file_values = {}
        if args.config:
            try:
                file_values = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {args.config}: {exc}") from exc
            if not isinstance(file_values, dict):
                raise UsageError("config file must hold a JSON object")
        cfg = ExperimentConfig.resolve(file_values, flags)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"linsec: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionError, TrainingError, atk.InstanceTooLarge, OSError) as exc:
        print(f"linsec: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericFailure, FloatingPointError) as exc:
        print(f"linsec: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # remaining validation errors come from option values
        print(f"linsec: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
