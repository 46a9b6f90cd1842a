"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 numeric divergence. Progress goes to
stderr; machine-readable results go to files or stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import binding, dvmp, metrics
from .harness import DivergenceError, ScheduleConfig, run, separation_metrics, write_snapshots
from .loss import PieceAlignment, loss_total, tensor_from_csv, tensor_from_json

log = logging.getLogger("syngen")

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED = 0, 2, 3


class InputError(Exception):
    pass


def _read_text(path):
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except OSError as err:
        raise InputError(f"cannot read {path}: {err.strerror}") from None


def _load_config(path, allowed):
    if path is None:
        return {}
    try:
        cfg = json.loads(_read_text(path))
    except json.JSONDecodeError as err:
        raise InputError(f"{path}: invalid JSON ({err.msg})") from None
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: config must be a JSON object")
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise InputError(f"{path}: unknown config keys {unknown}")
    return cfg


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _load_bindings(path, sentence):
    try:
        doc = json.loads(_read_text(path))
    except json.JSONDecodeError as err:
        raise InputError(f"{path}: invalid JSON ({err.msg})") from None
    if isinstance(doc, list):
        if not 0 <= sentence < len(doc):
            raise InputError(f"{path}: sentence {sentence} out of range ({len(doc)} sentences)")
        doc = doc[sentence]
    try:
        return doc, binding.bindings_from_dict(doc)
    except (KeyError, TypeError, ValueError) as err:
        raise InputError(f"{path}: malformed bindings ({err})") from None


def _alignment(doc, pieces):
    n_words = len(doc.get("tokens", [])) or max(
        [s["root"]["index"] for s in doc["sets"]]
        + [u["index"] for s in doc["sets"] for u in s["unmatched"]]
        + [m["index"] for s in doc["sets"] for m in s["modifiers"]] + [1]
    )
    if pieces is None:
        return PieceAlignment.identity(n_words)
    if len(pieces) != n_words:
        raise InputError(f"'pieces' lists {len(pieces)} words, bindings have {n_words}")
    try:
        return PieceAlignment.from_counts(pieces)
    except ValueError as err:
        raise InputError(str(err)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_extract(args) -> int:
    text = _read_text(args.conllu)
    try:
        graphs = binding.parse_conllu(text)
    except binding.ConlluError as err:
        raise InputError(f"{args.conllu}: {err}") from None
    _write(args.out, binding.dumps_bindings(graphs))
    log.info("extracted bindings for %d sentence(s)", len(graphs))
    return EXIT_OK


def cmd_loss(args) -> int:
    cfg = _load_config(args.config, {"pieces", "sentence"})
    doc, sets = _load_bindings(args.bindings, cfg.get("sentence", args.sentence))
    raw = _read_text(args.maps)
    try:
        if args.maps.endswith(".csv"):
            tensor = tensor_from_csv(raw, args.grid_side)
        else:
            tensor = tensor_from_json(raw)
    except ValueError as err:
        raise InputError(f"{args.maps}: {err}") from None
    align = _alignment(doc, cfg.get("pieces"))
    if align.n_tokens > tensor.n_tokens:
        raise InputError(f"alignment needs {align.n_tokens} maps, {args.maps} has {tensor.n_tokens}")
    report = loss_total(tensor, sets, align)
    _write(args.out, json.dumps(report.to_dict(), indent=2) + "\n")
    return EXIT_OK


OPTIMIZE_KEYS = {"pieces", "sentence", "snapshots"} | set(ScheduleConfig.__dataclass_fields__)


def cmd_optimize(args) -> int:
    cfg = _load_config(args.config, OPTIMIZE_KEYS)
    pieces = cfg.pop("pieces", None)
    sentence = cfg.pop("sentence", args.sentence)
    snapshots = cfg.pop("snapshots", True)
    if args.snapshots is not None:
        snapshots = args.snapshots == "on"
    if args.seed is not None:
        cfg["rng_seed"] = args.seed
    if args.alpha is not None:
        cfg["scale_factor"] = args.alpha
    try:
        config = ScheduleConfig.toy(**cfg)
    except (TypeError, ValueError) as err:
        raise InputError(f"invalid config: {err}") from None

    doc, sets = _load_bindings(args.bindings, sentence)
    align = _alignment(doc, pieces)
    out_dir = args.out or "."
    log.info("optimizing %r: T=%d, %d interventions, alpha=%g",
             doc.get("sentence", ""), config.total_steps, config.intervention_steps, config.scale_factor)
    try:
        traj = run(sets, align, config, snapshots=snapshots)
    except DivergenceError as err:
        log.error("diverged: %s", err)
        return EXIT_DIVERGED

    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "trajectory.jsonl"), traj.to_jsonl())
    if snapshots:
        write_snapshots(traj, os.path.join(out_dir, "snapshots"), config.grid_side)
    sep = separation_metrics(traj)
    summary = {
        "sentence": doc.get("sentence", ""),
        "config": config.to_dict(),
        "initial_loss": traj.records[0].report.l_total,
        "final_loss": traj.records[-1].report.l_total,
        "initial_ratio": sep["ratio"][0] if sep["ratio"] else None,
        "final_ratio": sep["ratio"][-1] if sep["ratio"] else None,
        "records": len(traj),
    }
    text = json.dumps(summary, indent=2) + "\n"
    _write(os.path.join(out_dir, "summary.json"), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gen_dvmp(args) -> int:
    cfg = _load_config(args.config, {"seed", "count", "swap"})
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    count = args.count if args.count is not None else cfg.get("count", 600)
    swap = args.swap or cfg.get("swap", False)
    if count < 1:
        raise InputError("count must be at least 1")
    records = dvmp.generate_dataset(seed, count)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    dvmp.write_dataset(records, os.path.join(out_dir, "dvmp.txt"), os.path.join(out_dir, "dvmp.jsonl"))
    log.info("wrote %d prompts to %s", len(records), out_dir)
    if swap:
        swapped = []
        for rec in records:
            if sum(1 for _, m in rec.gold_sets if m) < 2:
                continue
            try:
                swapped.append(dvmp.swap_counterpart(rec, rec.seed))
            except dvmp.CoherenceError as err:
                log.warning("%s", err)
        dvmp.write_dataset(swapped, os.path.join(out_dir, "dvmp_swapped.txt"),
                           os.path.join(out_dir, "dvmp_swapped.jsonl"))
        log.info("wrote %d swapped counterparts", len(swapped))
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        records = metrics.load_annotations(args.annotations)
        summary = metrics.summarize(records, "macro" if args.macro else "micro")
    except OSError as err:
        raise InputError(f"cannot read {args.annotations}: {err.strerror}") from None
    except metrics.MetricsError as err:
        raise InputError(str(err)) from None
    _write(args.out, json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", default=None, help="flat JSON config file; flags override it")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="syngen", description="Syntax-guided attention binding toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common], help="CoNLL-U parses -> binding JSON")
    p.add_argument("conllu")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("loss", parents=[common], help="evaluate the loss on stored attention maps")
    p.add_argument("bindings")
    p.add_argument("maps", help="attention tensor as .json or .csv")
    p.add_argument("--grid-side", type=int, default=None, help="grid side for CSV input")
    p.add_argument("--sentence", type=int, default=0)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("optimize", parents=[common], help="run the toy latent intervention")
    p.add_argument("bindings")
    p.add_argument("--alpha", type=float, default=None, help="scale factor override")
    p.add_argument("--snapshots", choices=("on", "off"), default=None)
    p.add_argument("--sentence", type=int, default=0)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("gen-dvmp", parents=[common], help="generate DVMP prompts")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--swap", action="store_true", help="also write modifier-swapped counterparts")
    p.set_defaults(func=cmd_gen_dvmp)

    p = sub.add_parser("eval", parents=[common], help="binding metrics over annotations")
    p.add_argument("annotations", help="CSV or JSON-lines annotation records")
    p.add_argument("--macro", action="store_true", help="macro-average over records")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InputError as err:
        print(f"syngen {args.command}: error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
