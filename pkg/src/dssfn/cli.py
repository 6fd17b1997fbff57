"""Experiment runner: accuracy runs, centralized-equivalence checks, and
degree sweeps, all driven by flat key=value config files with CLI overrides.

Exit codes: 0 success, 1 config validation failure, 2 verdict failure,
3 runtime abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import sys
import time
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import LabeledDataset, load_csv, normalize_features, synthetic_blobs
from .model import SsfnDims
from .network import CommLedger, comm_ratio, d_max
from .trainer import (
    TrainConfig,
    evaluate,
    partition_dataset,
    train_centralized,
    train_decentralized,
)

SUMMARY_COLUMNS = (
    "config_hash,mode,seed,train_accuracy,test_accuracy,train_error_db,"
    "total_comm_scalars,consensus_rounds,comm_ratio_eta,wall_time_s"
)
TRACE_COLUMNS = "layer,admm_iter,objective,residual"


@dataclass
class ExperimentSpec:
    mode: str = "decentralized"  # centralized | decentralized | equivalence | degree-sweep
    output_dir: str = "runs"
    seeds: tuple[int, ...] = (0,)
    # data source: CSV paths, or synthetic blobs when train_csv is unset
    train_csv: str | None = None
    test_csv: str | None = None
    label_column: str = "label"
    num_classes: int | None = None
    synthetic_p: int = 5
    synthetic_q: int = 3
    synthetic_train: int = 400
    synthetic_test: int = 200
    separation: float = 6.0
    normalize: str = "none"
    # architecture / training
    layers: int = 3
    extra_neurons: int = 20  # n = 2q + extra_neurons
    workers: int = 4
    degree: int | None = None
    admm_iterations: int = 300
    mu0: float = 1e-2
    mu_l: float = 1e-2
    eps_bound: float | None = None
    consensus: str = "exact"
    tolerance: float = 1e-8
    round_cap: int = 100_000
    fixed_rounds: int | None = None
    # assumed gradient-descent iteration count for the communication ratio
    gd_iterations: int = 10_000
    # degree sweep
    degrees: tuple[int, ...] = ()


_MODES = ("centralized", "decentralized", "equivalence", "degree-sweep")


def _parse_int_list(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


_OPTIONAL_FIELDS = frozenset(
    {"train_csv", "test_csv", "num_classes", "degree", "eps_bound", "fixed_rounds"}
)


def _coerce(name: str, raw: str, typ):
    raw = raw.strip()
    # only genuinely optional fields may be unset; "none" is a legal literal
    # value elsewhere (the normalize policy)
    if name in _OPTIONAL_FIELDS and raw.lower() in ("none", ""):
        return None
    if typ is bool:
        return raw.lower() in ("1", "true", "yes")
    if typ == tuple[int, ...]:
        return _parse_int_list(raw)
    if typ in (int, float, str):
        return typ(raw)
    # Optional[...] fields
    for base in (int, float, str):
        if str(base.__name__) in str(typ):
            return base(raw)
    raise ValueError(f"cannot parse config key {name!r}")


_FIELD_TYPES = {
    "mode": str, "output_dir": str, "seeds": tuple[int, ...],
    "train_csv": str, "test_csv": str, "label_column": str, "num_classes": int,
    "synthetic_p": int, "synthetic_q": int, "synthetic_train": int,
    "synthetic_test": int, "separation": float, "normalize": str,
    "layers": int, "extra_neurons": int, "workers": int, "degree": int,
    "admm_iterations": int, "mu0": float, "mu_l": float, "eps_bound": float,
    "consensus": str, "tolerance": float, "round_cap": int, "fixed_rounds": int,
    "gd_iterations": int, "degrees": tuple[int, ...],
}


def parse_config_file(path) -> dict:
    """Flat `key = value` lines; '#' starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}, line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}, line {lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw, _FIELD_TYPES[key])
    return values


def build_spec(file_values: dict, overrides: dict) -> ExperimentSpec:
    """Defaults < config file < CLI overrides."""
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentSpec(**merged)


def spec_num_classes(spec: ExperimentSpec) -> int | None:
    if spec.train_csv is not None:
        return spec.num_classes
    return spec.synthetic_q


def validate_config(spec: ExperimentSpec) -> list[str]:
    """All problems at once; an empty list means the spec is runnable."""
    problems = []
    if spec.mode not in _MODES:
        problems.append(f"mode must be one of {_MODES}, got {spec.mode!r}")
    if not spec.seeds:
        problems.append("need at least one seed")
    if spec.layers < 1:
        problems.append(f"layers must be >= 1, got {spec.layers}")
    if spec.extra_neurons < 1:
        problems.append(
            f"extra_neurons must be >= 1, got {spec.extra_neurons}: "
            "random block empty (n must exceed 2*num_classes)"
        )
    if spec.workers < 1:
        problems.append(f"workers must be >= 1, got {spec.workers}")
    if not spec.mu0 > 0:
        problems.append(f"mu0 must be positive, got {spec.mu0}")
    if not spec.mu_l > 0:
        problems.append(f"mu_l must be positive, got {spec.mu_l}")
    if spec.admm_iterations < 1:
        problems.append(f"admm_iterations must be >= 1, got {spec.admm_iterations}")
    if spec.eps_bound is not None and not spec.eps_bound > 0:
        problems.append(f"eps_bound must be positive, got {spec.eps_bound}")
    if not spec.tolerance > 0:
        problems.append(f"tolerance must be positive, got {spec.tolerance}")
    if spec.round_cap < 1:
        problems.append(f"round_cap must be >= 1, got {spec.round_cap}")
    if spec.normalize not in ("none", "unit_norm", "zscore"):
        problems.append(f"normalize must be none|unit_norm|zscore, got {spec.normalize!r}")
    if spec.consensus not in ("exact", "gossip"):
        problems.append(f"consensus must be exact|gossip, got {spec.consensus!r}")

    limit = d_max(spec.workers) if spec.workers >= 2 else 0
    if spec.degree is not None and spec.workers >= 2 and not 1 <= spec.degree <= limit:
        problems.append(
            f"degree {spec.degree} out of range: d_max({spec.workers}) = {limit}"
        )
    if spec.consensus == "gossip":
        if spec.workers < 2:
            problems.append("gossip consensus needs at least 2 workers")
        elif spec.degree is None and spec.mode != "degree-sweep":
            # degree-sweep supplies the degree per run from its degrees list
            problems.append("gossip consensus needs a degree")
    if spec.mode == "degree-sweep":
        if not spec.degrees:
            problems.append("degree-sweep needs a nonempty degrees list")
        else:
            bad = [d for d in spec.degrees if not 1 <= d <= limit]
            if bad:
                problems.append(
                    f"sweep degrees {bad} out of range: d_max({spec.workers}) = {limit}"
                )

    if spec.train_csv is not None:
        if not Path(spec.train_csv).exists():
            problems.append(f"train_csv not found: {spec.train_csv}")
        if spec.test_csv is not None and not Path(spec.test_csv).exists():
            problems.append(f"test_csv not found: {spec.test_csv}")
    else:
        if spec.synthetic_p < 1 or spec.synthetic_q < 1:
            problems.append(
                f"synthetic dims must be >= 1, got p={spec.synthetic_p}, q={spec.synthetic_q}"
            )
        if spec.synthetic_train < spec.workers:
            problems.append(
                f"synthetic_train={spec.synthetic_train} gives fewer samples than "
                f"workers={spec.workers}"
            )
    return problems


def resolved_config_text(spec: ExperimentSpec) -> str:
    lines = []
    for f in dataclasses.fields(ExperimentSpec):
        value = getattr(spec, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_hash(spec: ExperimentSpec) -> str:
    """Hash of the resolved config, minus where the results are written."""
    lines = [
        line
        for line in resolved_config_text(spec).splitlines()
        if not line.startswith("output_dir ")
    ]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:12]


def _load_data(spec: ExperimentSpec, seed: int):
    """Returns (train_set, test_set or None), already normalized."""
    if spec.train_csv is not None:
        train = load_csv(spec.train_csv, spec.label_column, spec.num_classes)
        test = (
            load_csv(spec.test_csv, spec.label_column, train.num_classes)
            if spec.test_csv is not None
            else None
        )
    else:
        # One draw for train+test so both splits share the same cluster means.
        total = spec.synthetic_train + spec.synthetic_test
        full = synthetic_blobs(
            spec.synthetic_p, spec.synthetic_q, total, spec.separation, seed
        )
        cut = spec.synthetic_train
        train = LabeledDataset(
            x=full.x[:, :cut], t=full.t[:, :cut], labels=full.labels[:cut]
        )
        test = (
            LabeledDataset(x=full.x[:, cut:], t=full.t[:, cut:], labels=full.labels[cut:])
            if spec.synthetic_test > 0
            else None
        )
    x_train, stats = normalize_features(train.x, spec.normalize)
    train = LabeledDataset.from_labels(x_train, train.labels, train.num_classes)
    if test is not None:
        x_test, _ = normalize_features(test.x, spec.normalize, stats)
        test = LabeledDataset.from_labels(x_test, test.labels, test.num_classes)
    return train, test


def _train_config(spec: ExperimentSpec, train_set: LabeledDataset, seed: int) -> TrainConfig:
    q = train_set.num_classes
    dims = SsfnDims(p=train_set.input_dim, q=q, n=2 * q + spec.extra_neurons, layers=spec.layers)
    return TrainConfig(
        dims=dims,
        workers=spec.workers,
        admm_iterations=spec.admm_iterations,
        mu0=spec.mu0,
        mu_l=spec.mu_l,
        eps_bound=spec.eps_bound,
        consensus=spec.consensus,
        degree=spec.degree,
        consensus_tolerance=spec.tolerance,
        consensus_round_cap=spec.round_cap,
        fixed_rounds=spec.fixed_rounds,
        seed=seed,
    )


def _write_trace(path, reports) -> None:
    with open(path, "w") as fh:
        fh.write(TRACE_COLUMNS + "\n")
        for rep in reports:
            for k, (obj, res) in enumerate(
                zip(rep.objective_trace, rep.primal_residual_trace)
            ):
                fh.write(f"{rep.layer_index},{k},{obj!r},{res!r}\n")


def _summary_row(spec, mode, seed, report, ledger, eta, wall) -> str:
    return (
        f"{config_hash(spec)},{mode},{seed},{report.train_accuracy!r},"
        f"{report.test_accuracy!r},{report.train_error_db!r},"
        f"{ledger.scalars_exchanged},{ledger.consensus_rounds},{eta!r},{wall!r}"
    )


def _spec_eta(spec: ExperimentSpec, q: int) -> float:
    n = 2 * q + spec.extra_neurons
    return comm_ratio(n, spec.gd_iterations, q, spec.admm_iterations)


def _run_one_seed(spec: ExperimentSpec, seed: int, mode: str):
    """Train once; returns (result, eval report, ledger, train/test sets, wall)."""
    train_set, test_set = _load_data(spec, seed)
    cfg = _train_config(spec, train_set, seed)
    ledger = CommLedger()
    start = time.perf_counter()
    if mode == "centralized":
        result = train_centralized(cfg, train_set)
    else:
        shards = partition_dataset(train_set, cfg.workers, seed)
        result = train_decentralized(cfg, shards, ledger=ledger)
    wall = time.perf_counter() - start
    report = evaluate(result.network, train_set, test_set)
    return result, report, ledger, train_set, test_set, wall


def _run_train(spec: ExperimentSpec, out: Path) -> int:
    rows = []
    for seed in spec.seeds:
        result, report, ledger, train_set, _, wall = _run_one_seed(spec, seed, spec.mode)
        _write_trace(out / f"trace_{spec.mode}_seed{seed}.csv", result.reports)
        rows.append(
            _summary_row(
                spec, spec.mode, seed, report, ledger,
                _spec_eta(spec, train_set.num_classes), wall,
            )
        )
    (out / "summary.csv").write_text(SUMMARY_COLUMNS + "\n" + "\n".join(rows) + "\n")
    return 0


EQUIVALENCE_TOLERANCE = 1e-4


def _run_equivalence(spec: ExperimentSpec, out: Path) -> int:
    gap_rows = ["seed,layer,rel_gap"]
    summary_rows = []
    worst = 0.0
    accuracy_match = True
    for seed in spec.seeds:
        train_set, test_set = _load_data(spec, seed)
        cfg = _train_config(spec, train_set, seed)
        cen = train_centralized(cfg, train_set)
        ledger = CommLedger()
        start = time.perf_counter()
        dec = train_decentralized(cfg, partition_dataset(train_set, cfg.workers, seed), ledger=ledger)
        wall = time.perf_counter() - start
        for crep, drep in zip(cen.reports, dec.reports):
            denom = max(np.linalg.norm(crep.o_star), 1e-30)
            gap = float(np.linalg.norm(crep.o_star - drep.o_star) / denom)
            worst = max(worst, gap)
            gap_rows.append(f"{seed},{crep.layer_index},{gap!r}")
        cen_eval = evaluate(cen.network, train_set, test_set)
        dec_eval = evaluate(dec.network, train_set, test_set)
        if test_set is not None and cen_eval.test_accuracy != dec_eval.test_accuracy:
            accuracy_match = False
        _write_trace(out / f"trace_decentralized_seed{seed}.csv", dec.reports)
        summary_rows.append(
            _summary_row(
                spec, "decentralized", seed, dec_eval, ledger,
                _spec_eta(spec, train_set.num_classes), wall,
            )
        )
    (out / "gaps.csv").write_text("\n".join(gap_rows) + "\n")
    (out / "summary.csv").write_text(SUMMARY_COLUMNS + "\n" + "\n".join(summary_rows) + "\n")
    passed = worst <= EQUIVALENCE_TOLERANCE and accuracy_match
    verdict = (
        f"{'pass' if passed else 'fail'}: max relative gap {worst!r} "
        f"(tolerance {EQUIVALENCE_TOLERANCE}), test accuracy match: {accuracy_match}\n"
    )
    (out / "verdict.txt").write_text(verdict)
    print(verdict, end="")
    return 0 if passed else 2


def _run_degree_sweep(spec: ExperimentSpec, out: Path) -> int:
    rows = ["degree,seed,consensus_rounds,total_comm_scalars,train_accuracy,wall_time_s"]
    for degree in spec.degrees:
        sub = dataclasses.replace(spec, degree=degree, consensus="gossip", mode="decentralized")
        for seed in spec.seeds:
            _, report, ledger, _, _, wall = _run_one_seed(sub, seed, "decentralized")
            rows.append(
                f"{degree},{seed},{ledger.consensus_rounds},"
                f"{ledger.scalars_exchanged},{report.train_accuracy!r},{wall!r}"
            )
    (out / "sweep.csv").write_text("\n".join(rows) + "\n")
    return 0


def run(spec: ExperimentSpec) -> int:
    problems = validate_config(spec)
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return 1
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_resolved.cfg").write_text(resolved_config_text(spec))
    try:
        if spec.mode in ("centralized", "decentralized"):
            return _run_train(spec, out)
        if spec.mode == "equivalence":
            return _run_equivalence(spec, out)
        return _run_degree_sweep(spec, out)
    except Exception:
        traceback.print_exc()
        return 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--output", help="output directory")
    parser.add_argument("--seeds", help="comma-separated seed list")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )


def _spec_from_args(args, mode: str) -> ExperimentSpec:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides: dict = {"mode": mode}
    if args.output is not None:
        overrides["output_dir"] = args.output
    if args.seeds is not None:
        overrides["seeds"] = _parse_int_list(args.seeds)
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"--set: unknown config key {key!r}")
        overrides[key] = _coerce(key, raw, _FIELD_TYPES[key])
    if getattr(args, "degrees", None):
        overrides["degrees"] = _parse_int_list(args.degrees)
    return build_spec(file_values, overrides)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dssfn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train and evaluate over the seed list")
    p_train.add_argument(
        "--mode", choices=("centralized", "decentralized"), default="decentralized"
    )
    _add_common(p_train)

    p_eq = sub.add_parser(
        "equivalence", help="check decentralized layer solutions against the centralized oracle"
    )
    _add_common(p_eq)

    p_sweep = sub.add_parser("sweep-degree", help="sweep gossip degrees, record rounds and traffic")
    p_sweep.add_argument("--degrees", help="comma-separated degree list")
    _add_common(p_sweep)

    p_val = sub.add_parser("validate", help="list all config problems without running")
    _add_common(p_val)

    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return run(_spec_from_args(args, args.mode))
        if args.command == "equivalence":
            return run(_spec_from_args(args, "equivalence"))
        if args.command == "sweep-degree":
            return run(_spec_from_args(args, "degree-sweep"))
        # validate
        spec = _spec_from_args(args, _spec_mode_for_validate(args))
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    problems = validate_config(spec)
    for p in problems:
        print(f"config error: {p}", file=sys.stderr)
    if not problems:
        print("config ok")
    return 1 if problems else 0


def _spec_mode_for_validate(args) -> str:
    file_values = parse_config_file(args.config) if args.config else {}
    for item in args.set:
        if item.startswith("mode="):
            return item.split("=", 1)[1].strip()
    return file_values.get("mode", "decentralized")


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
