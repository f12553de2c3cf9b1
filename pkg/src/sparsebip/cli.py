"""Command-line driver: ``sparsebip {synth,train,infer,eval}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure and
4 for an ``infer`` session that halted before reaching the end of the
interaction.  Every file written embeds the seed and a hash of the config that
produced it, and identical inputs plus ``--seed`` give byte-identical files.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from .basis import FitError
from .dataset import DataError, Dataset, dumps_json, format_table, load_dataset, read_raw_table, save_dataset
from .evaluation import LOOK_AHEADS, evaluate
from .filtering import FilterError, filter_steps, infer
from .model import InvalidInteraction, LayoutError
from .pipeline import VARIANT_ALIASES, ModelFormatError, PipelineConfig, TrainedModel, VariantConfig, train
from .synth import EDGE_CASES, ScenarioConfig, build_layout, edge_case_interaction, generate_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_HALTED = 0, 1, 2, 3, 4
COMPLETED_PHASE = 0.95


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Help(argparse.ArgumentDefaultsHelpFormatter):
    """Show a default only when there is a concrete one the text doesn't already give."""

    def _get_help_string(self, action):
        if action.default is None or action.default is False or "default" in (action.help or ""):
            return action.help
        return super()._get_help_string(action)


def _floats(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("look-ahead values must be non-negative")
    return values


def _variant(text: str) -> str:
    if text not in VARIANT_ALIASES:
        raise argparse.ArgumentTypeError(f"choose from {', '.join(VARIANT_ALIASES)}")
    return text


def read_config(path) -> dict:
    """JSON object from ``path``; syntax errors name the offending line."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise DataError(f"{path}:1: config must be a JSON object")
    return obj


def atomic_write(path, text: str) -> None:
    """Write via a temp file in the same directory, so a failure leaves nothing behind."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent if str(path.parent) else ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def pipeline_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_dict(read_config(args.config))
    overrides = {}
    if args.bins is not None:
        overrides["mi_bins"] = args.bins
    if args.mi_threshold is not None:
        overrides["mi_threshold"] = args.mi_threshold
    if args.ols_tolerance is not None:
        overrides["ols_tolerance"] = args.ols_tolerance
    return replace(cfg, **overrides)


def cmd_synth(args) -> int:
    cfg = ScenarioConfig.from_dict(read_config(args.config))
    overrides = {"seed": args.seed}
    if args.demos is not None:
        overrides["n_demos"] = args.demos
    cfg = replace(cfg, **overrides)
    ds = generate_dataset(cfg)
    meta = {"seed": cfg.seed, "config_hash": cfg.digest(), "scenario": cfg.to_dict()}
    save_dataset(args.out, Dataset(ds.layout, ds.demos, ds.groups, meta, ds.ground_truth()))
    counts = {m: sum(ch.modality == m for ch in ds.layout.channels) for m in ("force", "joint", "pose")}
    print(f"wrote {len(ds.demos)} demos to {args.out}: "
          f"{counts['force']} force + {counts['joint']} joint + {counts['pose']} pose channels "
          f"({len(ds.layout.observed)} observed, {len(ds.layout.controlled)} controlled)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = pipeline_config(args)
    ds = load_dataset(args.dataset)
    variant = VariantConfig.named(args.variant)
    meta = {"seed": args.seed, "config_hash": cfg.digest(),
            "dataset_hash": ds.meta.get("config_hash"), "n_demos": len(ds.demos)}
    model = train(ds.demos, variant, ds.groups, cfg, meta)
    atomic_write(args.out, dumps_json(model.to_dict()))
    print(f"{variant.name}: latent dimension {model.dimension}, {len(model.lengths)} demos -> {args.out}")
    if model.selection is not None:
        print(f"selected inputs: {', '.join(model.selection.selected) or '(none)'}")
    return EXIT_OK


def load_model(path) -> TrainedModel:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return TrainedModel.from_dict(d)


def session_input(model: TrainedModel, args) -> np.ndarray:
    """Raw-layout array (NaN where unavailable) from a frames table or an edge case."""
    raw = model.reduction.raw_layout
    if args.edge_case is not None:
        cfg = replace(ScenarioConfig.from_dict(read_config(args.config)), seed=args.seed)
        layout = build_layout(cfg).layout
        if layout.names != raw.names:
            raise DataError("the model was not trained on the synthetic layout of this config")
        X, _, _ = edge_case_interaction(args.edge_case, cfg)
        return X
    names, data = read_raw_table(args.frames)
    unknown = [n for n in names if n not in raw.names]
    if unknown:
        raise DataError(f"{args.frames}: channels not in the model layout: {', '.join(unknown[:5])}")
    observed = {raw.names[k] for k in raw.observed}
    if not observed & set(names):
        raise DataError(f"{args.frames}: no observed channel of the model is present")
    X = np.full((data.shape[0], len(raw)), np.nan)
    for j, n in enumerate(names):
        if n in observed:
            X[:, raw.index(n)] = data[:, j]
    return X


def cmd_infer(args) -> int:
    model = load_model(args.model)
    X = session_input(model, args)
    if X.shape[0] == 0:
        raise DataError("no frames")
    frames = model.frames(X)
    layout = model.layout
    obs_names = [layout.names[k] for k in layout.observed]
    rows = []
    rng = np.random.default_rng(args.seed)
    for step in filter_steps(model.initial_state(), frames, rng):
        out = infer(step.state, args.look_ahead)
        rows.append(np.concatenate([[step.index, out.phase, out.phase_velocity, out.look_ahead],
                                    out.decoded, step.innovation]))
    final = float(rows[-1][1])
    status = "completed" if final >= COMPLETED_PHASE else "halted"
    header = (["step", "phase", "phase_velocity", "look_ahead"] + list(layout.names)
              + [f"innovation_{n}" for n in obs_names])
    comment = (f"seed={args.seed} config_hash={model.config.digest()} variant={model.variant.name}\n"
               f"status={status} final_phase={final!r}")
    atomic_write(args.out, format_table(header, np.vstack(rows), comment))
    print(f"{status}: {len(rows)} steps, final phase {final:.3f} -> {args.out}")
    return EXIT_OK if status == "completed" else EXIT_HALTED


def cmd_eval(args) -> int:
    cfg = pipeline_config(args)
    ds = load_dataset(args.dataset)
    names = args.variant or list(VARIANT_ALIASES)
    variants = [VariantConfig.named(n) for n in dict.fromkeys(names)]
    if len(ds.demos) < args.folds:
        raise DataError(f"{len(ds.demos)} demos cannot fill {args.folds} folds")

    def progress(name, fold, folds):
        print(f"  {name}: fold {fold + 1}/{folds}", file=sys.stderr)

    report = evaluate(ds.demos, variants, args.folds, args.look_ahead, args.seed, ds.groups, cfg,
                      progress=progress if args.verbose else None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "report.csv", report.to_table())
    if len(variants) > 1:
        atomic_write(out / "significance.csv", report.significance_table())
    atomic_write(out / "summary.txt", report.summary())
    print(report.summary(), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sparsebip", description=__doc__.splitlines()[0],
                formatter_class=_Help)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.formatter_class = _Help
        sp.add_argument("--seed", type=int, default=0, help="random seed")

    def pipeline_flags(sp):
        sp.add_argument("--config", help="JSON file with pipeline settings")
        sp.add_argument("--bins", type=int, default=None,
                        help="MI histogram bins (default: ceil(sqrt(number of demos)))")
        sp.add_argument("--mi-threshold", type=float, default=None,
                        help=f"minimum MI increment to keep selecting (default {PipelineConfig.mi_threshold})")
        sp.add_argument("--ols-tolerance", type=float, default=None,
                        help=f"OLS unexplained-energy stop (default {PipelineConfig.ols_tolerance})")

    sp = sub.add_parser("synth", help="generate a synthetic demonstration dataset")
    common(sp)
    sp.add_argument("--config", help="JSON file with scenario settings")
    sp.add_argument("--demos", type=int, default=None, help="number of demos (default 121)")
    sp.add_argument("--out", required=True, help="output directory (must not exist or be empty)")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="fit one model variant on a dataset")
    common(sp)
    pipeline_flags(sp)
    sp.add_argument("dataset", help="dataset directory")
    sp.add_argument("--variant", type=_variant, default="group-ols",
                    help=f"one of {', '.join(VARIANT_ALIASES)}")
    sp.add_argument("--out", required=True, help="model file to write")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("infer", help="run the filter over a session and write a trace")
    common(sp)
    sp.add_argument("model", help="trained model file")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--frames", help="table of observed channels, one row per step")
    src.add_argument("--edge-case", choices=EDGE_CASES, help="synthesize an edge-case session")
    sp.add_argument("--config", help="JSON scenario settings for --edge-case")
    sp.add_argument("--look-ahead", type=float, default=0.0, help="phase offset for decoding")
    sp.add_argument("--out", required=True, help="trace table to write")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("eval", help="cross-validated comparison of variants")
    common(sp)
    pipeline_flags(sp)
    sp.add_argument("dataset", help="dataset directory")
    sp.add_argument("--variant", type=_variant, action="append",
                    help="variant to include; repeat for several (default: all four)")
    sp.add_argument("--folds", type=int, default=10, help="number of folds")
    sp.add_argument("--look-ahead", type=_floats, default=LOOK_AHEADS,
                    help="comma-separated phase look-aheads (default: %s)" % ",".join(map(str, LOOK_AHEADS)))
    sp.add_argument("--out", required=True, help="report directory")
    sp.add_argument("-v", "--verbose", action="store_true", help="print fold progress")
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if np.any(np.asarray(getattr(args, "look_ahead", 0.0)) < 0):
        print("sparsebip: error: look-ahead must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "folds", 2) < 2:
        print("sparsebip: error: --folds must be >= 2", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (FilterError, FitError, LinAlgError, FloatingPointError) as exc:
        print(f"sparsebip: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, InvalidInteraction, LayoutError, ModelFormatError, ValueError, OSError) as exc:
        print(f"sparsebip: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
