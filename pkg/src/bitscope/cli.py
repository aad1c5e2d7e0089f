"""Command-line front end: ``bitscope <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors (bad flags, unknown notation)
and 2 on data errors (missing or corrupt files).  Tables go to stdout,
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as bio
from .errors import (BitscopeError, DataError, ExplorationError, FormatError, NotationError,
                     OperatorError, ParseError, ShapeError)

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--json", action="store_true", help="print machine-readable JSON instead of a table")


def _data_arg(p, required=False):
    p.add_argument("--data", type=Path, default=None,
                   help="dataset directory with IDX files (default: $LOP_DATA_DIR or ./data)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bitscope", description="Low-precision inference emulation and bit-width search.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fetch-mnist", help="write a stratified MNIST sample as IDX files")
    _common(p)
    p.add_argument("--out", type=Path, default=None, help="target directory (default: data dir)")
    p.add_argument("--csv", type=Path, default=None, help="CSV sample (784 pixels + label per row)")
    p.add_argument("--train-per-class", type=int, default=400)

    p = sub.add_parser("train", help="train a float32 reference model")
    _common(p)
    p.add_argument("--arch", default="desk", choices=("desk", "tiny"))
    _data_arg(p)
    p.add_argument("--out", type=Path, required=True, help="model directory to write")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--limit", type=int, default=None, help="use only the first N training images")

    p = sub.add_parser("profile", help="collect per-part value ranges")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    _data_arg(p)
    p.add_argument("--plan", type=Path, default=None, help="partition plan JSON (default: one part per layer)")
    p.add_argument("--split", default="train", choices=("train", "test"))
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("quantize", help="quantize weights and summarize rounding and saturation")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--plan", type=Path, default=None)
    p.add_argument("--configs", required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("infer", help="classify one image")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    _data_arg(p)
    p.add_argument("--plan", type=Path, default=None)
    p.add_argument("--configs", default="FL(8,23)")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--index", type=int, default=0, help="image index within the split")
    p.add_argument("--image", type=Path, default=None, help=".npy file with one 28x28 image in [0,1)")

    p = sub.add_parser("evaluate", help="accuracy of one or more configurations")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    _data_arg(p)
    p.add_argument("--plan", type=Path, default=None)
    p.add_argument("--configs", action="append", required=True,
                   help="notation for all parts or PART=NOTATION,...; repeat for a sweep")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", type=Path, default=None, help="write the sweep as JSON")

    p = sub.add_parser("explore", help="two-pass bit-width exploration")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    _data_arg(p)
    p.add_argument("--plan", type=Path, default=None)
    p.add_argument("--profile", type=Path, required=True)
    p.add_argument("--settings", type=Path, default=None, help="JSON or TOML settings file")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("report", help="render a profile, sweep or exploration report")
    _common(p)
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--style", choices=("table1", "table3", "table4"), required=True)
    p.add_argument("--out", type=Path, default=None, help="directory for <style>.csv and <style>.png")
    return ap


# -- helpers --------------------------------------------------------------------

def _data_dir(args) -> Path:
    return args.data if args.data is not None else bio.default_data_dir()


def _plan(args, model):
    from .nn.engine import PartitionPlan
    if getattr(args, "plan", None) is None:
        return PartitionPlan.layerwise(model)
    return PartitionPlan.from_dict(bio.read_json(args.plan, "plan")).check(model)


def _settings(path: Optional[Path]):
    from .explorer import ExplorerSettings
    if path is None:
        return ExplorerSettings()
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise DataError(f"settings file not found: {path}") from None
    try:
        d = tomllib.loads(raw.decode()) if path.suffix == ".toml" else json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse settings {path}: {exc}") from None
    if not isinstance(d, dict):
        raise DataError("settings must be a table/object")
    return ExplorerSettings.from_dict(d)


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        sys.stdout.write(bio.dumps_json(payload))
    else:
        sys.stdout.write(text)


# -- subcommands ----------------------------------------------------------------

def cmd_fetch_mnist(args) -> int:
    out = args.out if args.out is not None else bio.default_data_dir()
    counts = bio.build_mnist_subset(out, args.csv, args.train_per_class, args.seed)
    _emit(args, {"out": str(out), **counts},
          f"wrote {counts['train']} training and {counts['test']} test images to {out}\n")
    return 0


def cmd_train(args) -> int:
    from .nn.engine import PartitionPlan, evaluate, full_precision_configs
    from .nn.train import TrainSettings, train_reference
    root = _data_dir(args)
    train = bio.load_split(root, "train", args.limit)
    settings = TrainSettings(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    model = train_reference(args.arch, train, settings, log=_err)
    bio.save_model(model, args.out)
    payload = {"model": str(args.out), "arch": args.arch, "settings": settings.to_dict()}
    text = f"saved {args.arch} model to {args.out}\n"
    try:
        test = bio.load_split(root, "test")
    except DataError:
        test = None
    if test is not None:
        plan = PartitionPlan.layerwise(model)
        ev = evaluate(model, plan, full_precision_configs(plan), test, threads=args.threads)
        payload["test_accuracy"] = round(ev.accuracy, 4)
        text += f"test accuracy {100 * ev.accuracy:.2f}% ({ev.correct}/{ev.total})\n"
    _emit(args, payload, text)
    return 0


def cmd_profile(args) -> int:
    from .profiler import profile
    from .report import render
    model = bio.load_model(args.model)
    plan = _plan(args, model)
    data = bio.load_split(_data_dir(args), args.split, args.limit)
    prof = profile(model, plan, data.images)
    bio.write_json(args.out, prof.to_dict())
    rep = render("table1", prof.to_dict())
    _emit(args, rep["json"], rep["text"])
    return 0


def cmd_quantize(args) -> int:
    from .nn.engine import parse_configs, quantize_model, saturation_count
    model = bio.load_model(args.model)
    plan = _plan(args, model)
    configs = parse_configs(args.configs, plan)
    q = quantize_model(model, plan, configs)
    layers = []
    for li in model.weighted_layers():
        cfg = configs[plan.assignment[li]]
        w, b = model.weights[li], model.biases[li]
        wq, bq = q.quantized[li]
        err = float(np.max(np.abs(np.asarray(wq, dtype=np.float64) - w))) if w.size else 0.0
        layers.append({"layer": model.layers[li].name, "part": plan.names[plan.assignment[li]],
                       "format": str(cfg.weight_format),
                       "weight_saturated": saturation_count(w, cfg.weight_format),
                       "bias_saturated": saturation_count(b, cfg.weight_format),
                       "max_abs_error": err})
    doc = {"kind": "quantization", "configs": [c.notation for c in configs],
           "plan": plan.to_dict(), "layers": layers}
    bio.write_json(args.out, doc)
    from .report import text_table
    text = text_table(["layer", "part", "format", "weight_saturated", "bias_saturated", "max_abs_error"],
                      [[l["layer"], l["part"], l["format"], l["weight_saturated"], l["bias_saturated"],
                        f"{l['max_abs_error']:.3g}"] for l in layers])
    _emit(args, doc, text)
    return 0


def cmd_infer(args) -> int:
    from .nn.engine import infer, parse_configs
    model = bio.load_model(args.model)
    plan = _plan(args, model)
    configs = parse_configs(args.configs, plan)
    if args.image is not None:
        try:
            image = np.load(args.image, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read image {args.image}: {exc}") from None
        truth = None
    else:
        data = bio.load_split(_data_dir(args), args.split)
        if not 0 <= args.index < len(data):
            raise UsageError(f"--index must lie in [0, {len(data)})")
        image, truth = data.images[args.index], int(data.labels[args.index])
    label, scores = infer(model, plan, configs, image)
    payload = {"label": label, "truth": truth, "scores": [float(s) for s in scores]}
    text = f"predicted {label}" + ("" if truth is None else f" (label {truth})") + "\n"
    text += "scores " + " ".join(f"{s:.4g}" for s in scores) + "\n"
    _emit(args, payload, text)
    return 0


def cmd_evaluate(args) -> int:
    from .nn.engine import evaluate, full_precision_configs, parse_configs
    from .report import text_table
    model = bio.load_model(args.model)
    plan = _plan(args, model)
    # parse everything before any computation so notation errors fail fast
    sweeps = [parse_configs(c, plan) for c in args.configs]
    data = bio.load_split(_data_dir(args), args.split, args.limit)
    base = evaluate(model, plan, full_precision_configs(plan), data, threads=args.threads)
    rows = []
    for configs in sweeps:
        ev = evaluate(model, plan, configs, data, baseline=base.accuracy, threads=args.threads)
        rows.append({"configs": [c.notation for c in configs], "accuracy": ev.accuracy,
                     "correct": ev.correct, "total": ev.total, "relative": ev.relative})
    doc = {"kind": "sweep", "plan": plan.to_dict(), "baseline_accuracy": base.accuracy,
           "eval_size": len(data), "rows": rows}
    if args.out is not None:
        bio.write_json(args.out, doc)
    shown = [{"configs": r["configs"], "accuracy": round(100 * r["accuracy"], 2),
              "relative_accuracy": round(100 * r["relative"], 2)} for r in rows]
    text = f"baseline FL(8,23) accuracy {100 * base.accuracy:.2f}% on {len(data)} images\n"
    text += text_table(list(plan.names) + ["accuracy", "relative_accuracy"],
                       [r["configs"] + [f"{r['accuracy']:.2f}%", f"{r['relative_accuracy']:.2f}%"]
                        for r in shown])
    _emit(args, {"baseline_accuracy": round(100 * base.accuracy, 2), "rows": shown}, text)
    return 0


def cmd_explore(args) -> int:
    from .explorer import explore
    from .profiler import RangeProfile
    settings = _settings(args.settings)
    model = bio.load_model(args.model)
    plan = _plan(args, model)
    prof = RangeProfile.from_dict(bio.read_json(args.profile, "profile"))
    if len(prof.parts) != plan.num_parts:
        raise DataError(f"profile has {len(prof.parts)} parts, plan has {plan.num_parts}")
    data = bio.load_split(_data_dir(args), args.split)
    report = explore(model, plan, prof, settings, data, threads=args.threads)
    doc = report.to_dict()
    bio.write_json(args.out, doc)
    final = [c["notation"] for c in doc["final"]["configs"]]
    summary = {"final": final, "relative": round(100 * doc["final"]["relative"], 2),
               "cost": doc["final"]["cost"], "report": str(args.out)}
    text = (f"selected {', '.join(f'{n}={c}' for n, c in zip(plan.names, final))}\n"
            f"relative accuracy {summary['relative']:.2f}%  cost {summary['cost']:.0f}\n")
    for p in doc["parts"]:
        if p["pass1"]["warning"]:
            _err(f"warning: {p['pass1']['warning']}")
    _emit(args, summary, text)
    return 0


def cmd_report(args) -> int:
    from .report import render
    doc = bio.read_json(args.inp, "report input")
    if not isinstance(doc, dict):
        raise DataError("report input must be a JSON object")
    rep = render(args.style, doc, args.out)
    _emit(args, rep["json"], rep["text"])
    for f in rep.get("files", []):
        _err(f"wrote {f}")
    return 0


COMMANDS = {"fetch-mnist": cmd_fetch_mnist, "train": cmd_train, "profile": cmd_profile,
            "quantize": cmd_quantize, "infer": cmd_infer, "evaluate": cmd_evaluate,
            "explore": cmd_explore, "report": cmd_report}

USAGE_ERRORS = (UsageError, NotationError, OperatorError, FormatError, ParseError, ExplorationError)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return COMMANDS[args.command](args)
    except USAGE_ERRORS as exc:
        _err(f"usage error: {exc}")
        return 1
    except (BitscopeError, ShapeError) as exc:
        _err(f"data error: {exc}")
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
