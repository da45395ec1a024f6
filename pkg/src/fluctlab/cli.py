"""Command-line entry point: gen, train, analyze, report, compare, all.

Exit codes: 0 success, 1 run failure, 2 usage error.  FLUCTLAB_OUT names the
default output directory.  Manifest timestamps honor SOURCE_DATE_EPOCH and
default to 0 so rerunning a plan reproduces artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import (
    ANALYSIS_CHANNELS,
    DEFAULT_BINS,
    DEFAULT_EPSILON,
    analyze_run,
    calibrate_epsilon,
)
from .figures import (
    FigureSpec,
    fluctuation_table,
    hist_svg,
    reconstruct,
    scatter_svg,
    stack_svgs,
)
from .net import ArchitectureSpec
from .runfile import RunManifest, RunWriter, canonical_json_bytes, read_run
from .shapes import ShapeKind, export_csv, generate
from .train import DEFAULT_LEARNING_RATES, RunConfig, TrainingDivergedError, train

INDEX_SCHEMA_VERSION = 1
SHAPE_NAMES = tuple(k.value for k in ShapeKind)

# Weight-channel inactive-count reproduction window used for index flags.
INACTIVE_TARGET_RANGE = (40, 80)
INACTIVE_EPSILON_RANGE = (1e-6, 1e-3)


def _default_outdir() -> str:
    return os.environ.get("FLUCTLAB_OUT", "runs")


def _default_timestamp() -> int:
    return int(os.environ.get("SOURCE_DATE_EPOCH", "0"))


def _format_lr(lr: float) -> str:
    return f"{lr:g}"


def _run_stem(shape: str, lr: float, epochs: int) -> str:
    return f"{shape}_{_format_lr(lr)}_{epochs}"


@dataclass
class ExperimentPlan:
    shapes: list[str]
    learning_rates: list[float] = field(default_factory=lambda: list(DEFAULT_LEARNING_RATES))
    epochs: int = 1000
    data_seed: int = 0
    init_seed: int = 0
    capture_every: int = 1
    out_dir: str = "runs"
    epsilon: float = DEFAULT_EPSILON
    bins: int = DEFAULT_BINS
    parallelism: int = 1
    created_utc: int = 0

    def __post_init__(self):
        if not self.shapes or not self.learning_rates:
            raise ValueError("plan needs at least one shape and one learning rate")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        for name in self.shapes:
            ShapeKind.from_name(name)

    def to_json_dict(self) -> dict:
        # parallelism is a scheduling knob, not an experiment parameter, so it
        # stays out of the recorded plan (artifacts must not depend on it)
        return {
            "shapes": list(self.shapes),
            "learning_rates": list(self.learning_rates),
            "epochs": self.epochs,
            "data_seed": self.data_seed,
            "init_seed": self.init_seed,
            "capture_every": self.capture_every,
            "epsilon": self.epsilon,
            "bins": self.bins,
            "created_utc": self.created_utc,
        }


def train_run_to_file(config: RunConfig, path: Path, created_utc: int = 0) -> float:
    """Train one run and persist it; returns the final loss.  A failed run
    leaves the file flagged incomplete."""
    manifest = RunManifest(
        config=config, architecture=ArchitectureSpec(), created_utc=created_utc
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    with RunWriter(path, manifest) as writer:
        _, final_loss = train(config, writer.append)
        writer.finalize(complete=True)
    return final_loss


def _write_bytes(path: Path, blob: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)


def _emit_run_artifacts(run_path: Path, out_dir: Path, epsilon: float, bins: int) -> dict:
    """Analysis JSON/CSV, scatter, per-channel histograms, and tables for one run."""
    manifest, acc = read_run(run_path)
    with acc:
        cfg = manifest.config
        stem = _run_stem(cfg.shape.value, cfg.learning_rate, cfg.epochs)
        report = analyze_run(acc, epsilon=epsilon, bins=bins)
        final_loss = float(acc.losses()[-1])

        report_json = out_dir / f"{stem}.report.json"
        _write_bytes(report_json, canonical_json_bytes(report.to_json_dict()) + b"\n")
        neurons_csv = out_dir / f"{stem}.neurons.csv"
        _write_bytes(neurons_csv, report.neuron_csv().encode("utf-8"))

        dataset = generate(cfg.shape, 500, cfg.data_seed)
        result = reconstruct(acc, dataset)
        lr_txt = _format_lr(cfg.learning_rate)
        figures = []
        scatter_path = out_dir / f"{stem}_scatter.svg"
        _write_bytes(
            scatter_path,
            scatter_svg(
                result,
                FigureSpec(title=f"{cfg.shape.value}: reconstruction at lr {lr_txt}"),
            ),
        )
        figures.append(scatter_path.name)
        hists = {}
        for channel in ANALYSIS_CHANNELS:
            hist_path = out_dir / f"{stem}_hist_{channel}.svg"
            _write_bytes(
                hist_path,
                hist_svg(
                    report,
                    channel,
                    FigureSpec(
                        title=f"{cfg.shape.value}: {channel} spread at lr {lr_txt}",
                        x_label="per-neuron spread",
                        y_label="neurons",
                    ),
                ),
            )
            figures.append(hist_path.name)
            hists[channel] = hist_path.name
        md_blob, csv_blob = fluctuation_table(report)
        table_md = out_dir / f"{stem}_table.md"
        table_csv = out_dir / f"{stem}_table.csv"
        _write_bytes(table_md, md_blob)
        _write_bytes(table_csv, csv_blob)

        weight_spreads = [s.spread for s in report.channels["weights"].spreads]
        default_count = len(report.channels["weights"].inactive)
        calibrated = calibrate_epsilon(
            weight_spreads, INACTIVE_TARGET_RANGE, INACTIVE_EPSILON_RANGE
        )
        flags = []
        if default_count < INACTIVE_TARGET_RANGE[0] and calibrated is None:
            flags.append("weights-inactive-count-unreproduced")

        return {
            "final_loss": final_loss,
            "inactive_counts": {
                ch: len(report.channels[ch].inactive) for ch in ANALYSIS_CHANNELS
            },
            "weights_inactive_default": default_count,
            "weights_epsilon_calibrated": calibrated,
            "flags": flags,
            "report_json": report_json.name,
            "neurons_csv": neurons_csv.name,
            "table_md": table_md.name,
            "table_csv": table_csv.name,
            "figures": figures,
            "hist_figures": hists,
        }


def _execute_run(task: dict) -> dict:
    """Worker for one (shape, learning rate) cell; returns an index entry."""
    entry = {
        "shape": task["shape"],
        "learning_rate": task["learning_rate"],
        "status": "ok",
    }
    out_dir = Path(task["out_dir"])
    try:
        config = RunConfig(
            shape=ShapeKind(task["shape"]),
            learning_rate=task["learning_rate"],
            epochs=task["epochs"],
            data_seed=task["data_seed"],
            init_seed=task["init_seed"],
            capture_every=task["capture_every"],
        )
        stem = _run_stem(config.shape.value, config.learning_rate, config.epochs)
        run_path = out_dir / f"{stem}.nfl"
        train_run_to_file(config, run_path, created_utc=task["created_utc"])
        entry["run_file"] = run_path.name
        entry.update(
            _emit_run_artifacts(run_path, out_dir, task["epsilon"], task["bins"])
        )
    except Exception as exc:  # noqa: BLE001 - a failed cell must not sink the plan
        entry["status"] = "failed"
        entry["error"] = f"{type(exc).__name__}: {exc}"
    return entry


def run_plan(plan: ExperimentPlan) -> tuple[dict, int]:
    """Execute every (shape, lr) cell, emit artifacts and the index; returns
    (index dict, exit code)."""
    out_dir = Path(plan.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        {
            "shape": shape,
            "learning_rate": lr,
            "epochs": plan.epochs,
            "data_seed": plan.data_seed,
            "init_seed": plan.init_seed,
            "capture_every": plan.capture_every,
            "epsilon": plan.epsilon,
            "bins": plan.bins,
            "out_dir": str(out_dir),
            "created_utc": plan.created_utc,
        }
        for shape in plan.shapes
        for lr in plan.learning_rates
    ]
    if plan.parallelism > 1:
        with ProcessPoolExecutor(max_workers=plan.parallelism) as pool:
            entries = list(pool.map(_execute_run, tasks))
    else:
        entries = [_execute_run(t) for t in tasks]

    comparison_figures = []
    for shape in plan.shapes:
        ok = [e for e in entries if e["shape"] == shape and e["status"] == "ok"]
        if len(ok) < 2:
            continue
        for channel in ANALYSIS_CHANNELS:
            children = [(out_dir / e["hist_figures"][channel]).read_bytes() for e in ok]
            blob = stack_svgs(
                children, title=f"{shape}: {channel} spread across learning rates"
            )
            name = f"{shape}_hist_{channel}_all.svg"
            _write_bytes(out_dir / name, blob)
            comparison_figures.append(name)

    index = {
        "schema_version": INDEX_SCHEMA_VERSION,
        "plan": plan.to_json_dict(),
        "entries": entries,
        "comparison_figures": comparison_figures,
    }
    _write_bytes(out_dir / "index.json", canonical_json_bytes(index) + b"\n")
    failed = sum(1 for e in entries if e["status"] != "ok")
    return index, (1 if failed else 0)


def cmd_gen(args: argparse.Namespace) -> int:
    kind = ShapeKind(args.shape)
    dataset = generate(kind, args.count, args.seed)
    out = Path(args.out) if args.out else Path(args.outdir) / f"{kind.value}_{args.count}_{args.seed}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n") as fh:
        export_csv(dataset, fh)
    print(out)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = RunConfig(
        shape=ShapeKind(args.shape),
        learning_rate=args.lr,
        epochs=args.epochs,
        data_seed=args.data_seed,
        init_seed=args.init_seed,
        capture_every=args.capture_every,
    )
    stem = _run_stem(config.shape.value, config.learning_rate, config.epochs)
    out = Path(args.out) if args.out else Path(args.outdir) / f"{stem}.nfl"
    try:
        final_loss = train_run_to_file(config, out, created_utc=_default_timestamp())
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{out} final_loss={final_loss!r}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    run_path = Path(args.run)
    report = analyze_run(run_path, epsilon=args.epsilon, bins=args.bins, mode=args.mode)
    json_path = Path(args.json) if args.json else run_path.with_suffix(".report.json")
    csv_path = Path(args.csv) if args.csv else run_path.with_suffix(".neurons.csv")
    _write_bytes(json_path, canonical_json_bytes(report.to_json_dict()) + b"\n")
    _write_bytes(csv_path, report.neuron_csv().encode("utf-8"))
    print(json_path)
    print(csv_path)
    for ch in ANALYSIS_CHANNELS:
        stats = report.channels[ch]
        sos = {h: stats.halves[h].spread_of_spread for h in stats.halves}
        print(
            f"{ch}: inactive={len(stats.inactive)} "
            f"spread_of_spread encoder={sos['encoder']:.6g} decoder={sos['decoder']:.6g}"
        )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    out_dir = Path(args.outdir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_paths = [Path(p) for p in args.runs.split(",") if p]
    if not run_paths:
        print("error: --runs needs at least one run file", file=sys.stderr)
        return 2
    entries = []
    for run_path in run_paths:
        entry = _emit_run_artifacts(run_path, out_dir, args.epsilon, args.bins)
        manifest, acc = read_run(run_path)
        acc.close()
        entries.append((manifest.config, entry))
        for name in entry["figures"] + [entry["table_md"], entry["table_csv"]]:
            print(out_dir / name)
    shapes = {cfg.shape.value for cfg, _ in entries}
    if len(entries) > 1 and len(shapes) == 1:
        shape = shapes.pop()
        for channel in ANALYSIS_CHANNELS:
            children = [
                (out_dir / entry["hist_figures"][channel]).read_bytes()
                for _, entry in entries
            ]
            name = f"{shape}_hist_{channel}_all.svg"
            _write_bytes(
                out_dir / name,
                stack_svgs(children, title=f"{shape}: {channel} spread across learning rates"),
            )
            print(out_dir / name)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.runs) < 2:
        print("error: compare needs at least 2 run files", file=sys.stderr)
        return 2
    rows = []
    shapes = set()
    for path in args.runs:
        manifest, acc = read_run(path)
        with acc:
            shapes.add(manifest.config.shape.value)
            if len(shapes) > 1:
                print(f"error: runs mix shapes {sorted(shapes)}", file=sys.stderr)
                return 2
            report = analyze_run(acc, epsilon=args.epsilon, bins=args.bins)
            rows.append(
                {
                    "lr": manifest.config.learning_rate,
                    "final_mse": float(acc.losses()[-1]),
                    "inactive": {
                        ch: len(report.channels[ch].inactive) for ch in ANALYSIS_CHANNELS
                    },
                    "sos": {
                        ch: {
                            h: report.channels[ch].halves[h].spread_of_spread
                            for h in report.channels[ch].halves
                        }
                        for ch in ANALYSIS_CHANNELS
                    },
                }
            )
    best_mse = min(rows, key=lambda r: r["final_mse"])
    most_engaged = min(rows, key=lambda r: r["inactive"]["activations"])
    shape = shapes.pop()
    print(f"shape: {shape}")
    header = ["lr", "final_mse"] + [f"inactive_{ch}" for ch in ANALYSIS_CHANNELS]
    print("  ".join(f"{h:>22}" for h in header))
    for row in rows:
        cells = [f"{_format_lr(row['lr']):>22}", f"{row['final_mse']:>22.9g}"]
        cells += [f"{row['inactive'][ch]:>22d}" for ch in ANALYSIS_CHANNELS]
        print("  ".join(cells))
    print("spread_of_spread (encoder/decoder):")
    for row in rows:
        parts = [
            f"{ch}={row['sos'][ch]['encoder']:.4g}/{row['sos'][ch]['decoder']:.4g}"
            for ch in ANALYSIS_CHANNELS
        ]
        print(f"  lr {_format_lr(row['lr'])}: " + "  ".join(parts))
    print(f"lowest final MSE: lr {_format_lr(best_mse['lr'])}")
    print(
        "fewest inactive activation neurons: "
        f"lr {_format_lr(most_engaged['lr'])}"
    )
    return 0


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    return data


def _pick(flag, config: dict, key: str, default):
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def cmd_all(args: argparse.Namespace) -> int:
    try:
        config = _load_config_file(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    shapes_arg = _pick(args.shapes, config, "shapes", "all")
    if isinstance(shapes_arg, str):
        shapes = list(SHAPE_NAMES) if shapes_arg == "all" else shapes_arg.split(",")
    else:
        shapes = list(shapes_arg)
    lrs_arg = _pick(args.lrs, config, "learning_rates", list(DEFAULT_LEARNING_RATES))
    lrs = [float(x) for x in (lrs_arg.split(",") if isinstance(lrs_arg, str) else lrs_arg)]
    try:
        plan = ExperimentPlan(
            shapes=shapes,
            learning_rates=lrs,
            epochs=_pick(args.epochs, config, "epochs", 1000),
            data_seed=_pick(args.data_seed, config, "data_seed", 0),
            init_seed=_pick(args.init_seed, config, "init_seed", 0),
            capture_every=_pick(args.capture_every, config, "capture_every", 1),
            out_dir=_pick(args.outdir, config, "out_dir", _default_outdir()),
            epsilon=_pick(args.epsilon, config, "epsilon", DEFAULT_EPSILON),
            bins=_pick(args.bins, config, "bins", DEFAULT_BINS),
            parallelism=_pick(args.parallelism, config, "parallelism", 1),
            created_utc=_default_timestamp(),
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    index, code = run_plan(plan)
    for entry in index["entries"]:
        status = entry["status"]
        line = f"{entry['shape']} lr={_format_lr(entry['learning_rate'])}: {status}"
        if status == "ok":
            line += f" final_loss={entry['final_loss']:.6g}"
        else:
            line += f" ({entry['error']})"
        print(line)
    print(Path(plan.out_dir) / "index.json")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluctlab",
        description="Train small autoencoders on synthetic 2D shapes and "
        "analyze per-neuron fluctuation dynamics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a shape dataset CSV")
    p.add_argument("--shape", required=True, choices=SHAPE_NAMES)
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output CSV path")
    p.add_argument("--outdir", default=_default_outdir())
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one run and write its run file")
    p.add_argument("--shape", required=True, choices=SHAPE_NAMES)
    p.add_argument("--lr", type=float, required=True)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--capture-every", type=int, default=1)
    p.add_argument("--out", default=None, help="run file path")
    p.add_argument("--outdir", default=_default_outdir())
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="fluctuation report for one run file")
    p.add_argument("--run", required=True)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--mode", choices=("delta", "raw"), default="delta")
    p.add_argument("--json", default=None, help="report JSON path")
    p.add_argument("--csv", default=None, help="per-neuron CSV path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="figures and tables for run files")
    p.add_argument("--runs", required=True, help="comma-separated run files")
    p.add_argument("--outdir", default=_default_outdir())
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", help="side-by-side table for runs of one shape")
    p.add_argument("runs", nargs="+", help="run files (same shape)")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("all", help="full pipeline over shapes x learning rates")
    p.add_argument("--shapes", default=None, help='comma-separated shapes or "all"')
    p.add_argument("--lrs", default=None, help="comma-separated learning rates")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--data-seed", type=int, default=None)
    p.add_argument("--init-seed", type=int, default=None)
    p.add_argument("--capture-every", type=int, default=None)
    p.add_argument("--outdir", default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON config file (flags override it)")
    p.set_defaults(func=cmd_all)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
