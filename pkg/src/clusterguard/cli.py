"""Command-line front end.

Commands:
  run     execute one experiment from a JSON config
  sweep   cross aggregators x attacks x seeds from a sweep spec
  verify  run the independent oracle suites
  report  render an aggregator x attack accuracy matrix from sweep outputs

Exit codes: 0 ok, 1 runtime failure, 2 invalid input.

Aggregator grammar: name[:param[:param]] with names fedavg, coord-median,
trimmed-mean[:beta], krum[:f], geomed[:tol[:max_iter]],
autogm[:tol[:max_iter[:z]]], clustered-avg, clusterguard.
Attack grammar: none, label-flip[:fraction[:mode[:src:dst]]],
gaussian-update[:fraction[:sigma[:replace|add]]].
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import verify as verify_mod
from .attacks import parse_attack
from .aggregation import parse_aggregator
from .orchestrator import ConfigError, config_from_dict, load_config, run_experiment

OK = 0
RUNTIME_FAILURE = 1
INVALID_INPUT = 2


def cmd_run(config_path, out_dir, seed_override=None, threads=None) -> int:
    try:
        config = load_config(config_path, seed_override=seed_override)
        if threads is not None:
            config = config_from_dict({**config.to_dict(), "threads": threads},
                                      seed_override=seed_override)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return INVALID_INPUT
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return INVALID_INPUT
    try:
        result = run_experiment(config, out_dir=out_dir)
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return RUNTIME_FAILURE
    print(f"final test accuracy {result.final_accuracy:.4f} "
          f"after {config.rounds} rounds ({config.aggregator})")
    return OK


def _load_sweep_spec(path) -> dict:
    with open(path) as fh:
        spec = json.load(fh)
    for key in ("base_config", "aggregators", "attacks", "seeds"):
        if key not in spec:
            raise ConfigError(f"sweep field {key!r} is required")
    if not spec["aggregators"] or not spec["attacks"] or not spec["seeds"]:
        raise ConfigError("sweep aggregators, attacks, and seeds must be nonempty")
    if len(set(spec["seeds"])) != len(spec["seeds"]):
        raise ConfigError("sweep seeds must be distinct")
    # fail early on grammar errors before any cell runs
    for agg in spec["aggregators"]:
        parse_aggregator(agg)
    for attack in spec["attacks"]:
        if isinstance(attack, str):
            parse_attack(attack)
    return spec


def _cell_name(agg: str, attack, seed) -> str:
    attack_part = attack if isinstance(attack, str) else attack.get("kind", "custom")
    safe = f"{agg}__{attack_part}__s{seed}"
    return safe.replace(":", "_").replace("/", "_")


def cmd_sweep(sweep_path, out_dir=None, threads=None) -> int:
    try:
        spec = _load_sweep_spec(sweep_path)
        base_raw = json.loads(
            Path(spec["base_config"]).read_text()
            if Path(spec["base_config"]).is_absolute()
            else (Path(sweep_path).parent / spec["base_config"]).read_text()
        )
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid sweep spec: {exc}", file=sys.stderr)
        return INVALID_INPUT

    out = Path(out_dir if out_dir is not None else spec.get("out_dir", "sweep-out"))
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    failures = []
    for agg in spec["aggregators"]:
        for attack in spec["attacks"]:
            finals = {}
            for seed in spec["seeds"]:
                raw = dict(base_raw)
                raw["aggregator"] = agg
                raw["attack"] = attack
                if threads is not None:
                    raw["threads"] = threads
                cell = _cell_name(agg, attack, seed)
                try:
                    config = config_from_dict(raw, seed_override=seed)
                    result = run_experiment(config, out_dir=out / cell)
                    finals[seed] = result.final_accuracy
                except Exception as exc:
                    failures.append(f"{cell}: {exc}")
                    print(f"cell {cell} failed: {exc}", file=sys.stderr)
            rows.append((agg, attack, finals))

    header = ["aggregator", "attack"] + [f"acc_seed_{s}" for s in spec["seeds"]] + ["mean_acc"]
    lines = [",".join(header)]
    for agg, attack, finals in rows:
        attack_name = attack if isinstance(attack, str) else json.dumps(attack)
        cells = [agg, attack_name]
        cells += [repr(finals[s]) if s in finals else "" for s in spec["seeds"]]
        cells.append(repr(sum(finals.values()) / len(finals)) if finals else "")
        lines.append(",".join(cells))
    (out / "report.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'report.csv'} ({len(rows)} aggregated rows)")
    if failures:
        print(f"{len(failures)} cell(s) failed", file=sys.stderr)
        return RUNTIME_FAILURE
    return OK


def cmd_verify(fault=None) -> int:
    try:
        results = verify_mod.run_all(fault=fault)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return INVALID_INPUT
    name_width = max(len(r.name) for r in results)
    print(f"{'suite':<{name_width}}  cases  status  detail")
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{name_width}}  {r.cases:>5}  {status:<6}  {r.detail}")
    return OK if all(r.passed for r in results) else RUNTIME_FAILURE


def _collect_report_rows(results_dir: Path):
    """Prefer report.csv; otherwise assemble from per-cell summary.json files."""
    report = results_dir / "report.csv"
    rows = {}
    order_agg: list[str] = []
    order_attack: list[str] = []
    if report.exists():
        lines = report.read_text().strip().splitlines()
        header = lines[0].split(",")
        mean_idx = header.index("mean_acc")
        for line in lines[1:]:
            cells = line.split(",")
            agg, attack, mean = cells[0], cells[1], cells[mean_idx]
            if agg not in order_agg:
                order_agg.append(agg)
            if attack not in order_attack:
                order_attack.append(attack)
            rows[(agg, attack)] = float(mean) if mean else None
        return rows, order_agg, order_attack
    by_cell: dict[tuple[str, str], list[float]] = {}
    for summary_path in sorted(results_dir.glob("*/summary.json")):
        summary = json.loads(summary_path.read_text())
        key = (summary["aggregator"], summary["attack"])
        by_cell.setdefault(key, []).append(summary["final_test_acc"])
        if key[0] not in order_agg:
            order_agg.append(key[0])
        if key[1] not in order_attack:
            order_attack.append(key[1])
    for key, accs in by_cell.items():
        rows[key] = sum(accs) / len(accs)
    return rows, order_agg, order_attack


def cmd_report(results_dir, fmt: str = "markdown") -> int:
    results_dir = Path(results_dir)
    if not results_dir.is_dir():
        print(f"{results_dir} is not a directory", file=sys.stderr)
        return INVALID_INPUT
    rows, aggs, attacks_list = _collect_report_rows(results_dir)
    if not rows:
        print(f"no sweep outputs found under {results_dir}", file=sys.stderr)
        return INVALID_INPUT

    def fmt_cell(agg, attack):
        value = rows.get((agg, attack))
        return "—" if value is None else f"{100.0 * value:.2f}"

    if fmt == "csv":
        print(",".join(["aggregator"] + attacks_list))
        for agg in aggs:
            print(",".join([agg] + [fmt_cell(agg, a) for a in attacks_list]))
    else:
        print("| aggregator | " + " | ".join(attacks_list) + " |")
        print("|" + "---|" * (len(attacks_list) + 1))
        for agg in aggs:
            print("| " + " | ".join([agg] + [fmt_cell(agg, a) for a in attacks_list]) + " |")
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clusterguard",
        description="Deterministic federated-learning simulator with robust aggregation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("--config", required=True, help="path to experiment config JSON")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override master_seed")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads for per-client training")

    p_sweep = sub.add_parser("sweep", help="run an aggregator x attack x seed grid")
    p_sweep.add_argument("spec", help="path to sweep spec JSON")
    p_sweep.add_argument("--out", default=None, help="override the spec's out_dir")
    p_sweep.add_argument("--threads", type=int, default=None)

    p_verify = sub.add_parser("verify", help="run the oracle suites")
    p_verify.add_argument("--fault", default=None, help=argparse.SUPPRESS)

    p_report = sub.add_parser("report", help="render the accuracy matrix from a sweep")
    p_report.add_argument("results_dir")
    p_report.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out, seed_override=args.seed,
                       threads=args.threads)
    if args.command == "sweep":
        return cmd_sweep(args.spec, out_dir=args.out, threads=args.threads)
    if args.command == "verify":
        return cmd_verify(fault=args.fault)
    return cmd_report(args.results_dir, fmt=args.format)


if __name__ == "__main__":
    sys.exit(main())
