"""Command-line entry point: ``calsynth <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (bad data, vacuous bound,
endpoint failure) and 2 on a usage error. Output files are written atomically,
so a failing command never leaves a partial file behind. Randomized
subcommands default to ``--seed 0``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import bounds, calibrators, llm, metrics, targeting, toy
from .errors import CalibError, InvalidParam

DEFAULT_SEED = 0
DEFAULT_BINS = 10


def _write(out: str | None, text: str):
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _labels(args) -> metrics.LabelSpace:
    if getattr(args, "task", None):
        return llm.TaskSpec.load(args.task).labels
    return metrics.LabelSpace.parse(args.labels)


def _diagram(args, records):
    cfg = metrics.BinningConfig(args.bins, args.mode, _labels(args))
    return metrics.bin_records(records, cfg)


def _load_specs(path) -> list[targeting.GenerationSpec]:
    with open(path, encoding="utf-8") as fh:
        return [targeting.GenerationSpec.from_dict(obj) for obj in json.load(fh)]


# --- subcommands ------------------------------------------------------------

def cmd_ece(args):
    print(_diagram(args, metrics.load_records(args.input)).ece)


def cmd_diagram(args):
    diagram = _diagram(args, metrics.load_records(args.input))
    as_csv = args.format == "csv" or (args.format is None and args.out and args.out.endswith(".csv"))
    _write(args.out, diagram.to_csv() if as_csv else _json(diagram.to_dict()))


def cmd_bound_min_n(args):
    print(bounds.min_sample_size(args.epsilon, args.delta))


def cmd_bound_ece(args):
    print(_json(bounds.ece_bound(args.epsilon_a, args.n, args.gap).to_dict()), end="")


def cmd_bound_ece_min_n(args):
    print(bounds.ece_min_sample_size(args.epsilon, args.delta, args.gap))


def cmd_bound_simulate(args):
    freq = bounds.simulate_hoeffding(args.p, args.n, args.epsilon, args.trials, args.seed)
    print(_json({"frequency": freq,
                 "hoeffding_bound": bounds.accuracy_uncertainty(args.epsilon, args.n)}), end="")


def cmd_target(args):
    records = metrics.load_records(args.input)
    cfg = metrics.BinningConfig(args.bins, metrics.DiagramMode.SCORE, _labels(args))
    diagram = metrics.bin_records(records, cfg)
    specs = targeting.build_generation_specs(diagram, records, args.threshold, args.alpha,
                                             cfg.labels)
    _write(args.out, _json([s.to_dict() for s in specs]))


def cmd_generate(args):
    backend = llm.BackendConfig(
        kind=args.backend, endpoint=args.endpoint or "", model=args.model or "",
        temperature=args.temperature, max_parallel=args.max_parallel,
    )
    task = llm.TaskSpec.load(args.task)
    specs = _load_specs(args.specs)
    texts = llm.two_stage(specs, task, backend, k=args.k, strict=args.strict)
    _write(args.out, llm.dump_synthetic(texts))


def cmd_assemble(args):
    records = metrics.load_records(args.input)
    specs = _load_specs(args.specs)
    synthetic = llm.load_synthetic(args.synthetic)
    items = targeting.assemble(records, synthetic, specs, args.assembly, strict=args.strict)
    _write(args.out, "".join(json.dumps(i.to_dict()) + "\n" for i in items))


def cmd_calibrate_fit(args):
    records = metrics.load_records(args.fit_on)
    fitted = calibrators.fit(args.method, calibrators.pairs_from_records(records, _labels(args)))
    _write(args.out, _json(fitted.to_dict()))


def cmd_calibrate_apply(args):
    with open(args.calibrator, encoding="utf-8") as fh:
        cal = calibrators.from_dict(json.load(fh))
    records = metrics.load_records(args.input)
    out = [metrics.PredictionRecord(r.id, float(cal(r.score)), r.true_label, r.text)
           for r in records]
    _write(args.out, metrics.dump_records(out))


def cmd_toy_run(args):
    config = toy.ExperimentConfig(
        n=args.n, range=(args.lo, args.hi), beta_true=(args.beta0, args.beta1),
        num_bins=args.bins, threshold=args.threshold, seed=args.seed,
    )
    report = toy.run_experiment(config)
    if args.curve_csv:
        _write(args.curve_csv, toy.curve_csv(report))
    _write(args.out, _json(report.to_dict()))


# --- parser -----------------------------------------------------------------

def _binning(p, bins=DEFAULT_BINS, modes=True):
    p.add_argument("--bins", type=int, default=bins, help="number of equal-width bins")
    if modes:
        p.add_argument("--mode", choices=[m.value for m in metrics.DiagramMode], default="score")
    p.add_argument("--labels", default="0,1", help="NEGATIVE,POSITIVE class names")
    p.add_argument("--task", help="task spec JSON; its class_a is the positive class")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calsynth", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ece", help="print the ECE of a prediction file")
    p.add_argument("input")
    _binning(p)
    p.set_defaults(func=cmd_ece)

    p = sub.add_parser("diagram", help="export a reliability diagram (JSON or CSV)")
    p.add_argument("input")
    _binning(p)
    p.add_argument("--format", choices=["json", "csv"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagram)

    p = sub.add_parser("bound", help="PAC sample sizes and ECE bounds")
    bsub = p.add_subparsers(dest="bound_command", required=True)
    q = bsub.add_parser("min-n")
    q.add_argument("--epsilon", type=float, required=True)
    q.add_argument("--delta", type=float, required=True)
    q.set_defaults(func=cmd_bound_min_n)
    q = bsub.add_parser("ece")
    q.add_argument("--epsilon-a", type=float, required=True)
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--gap", type=float, default=0.0)
    q.set_defaults(func=cmd_bound_ece)
    q = bsub.add_parser("ece-min-n")
    q.add_argument("--epsilon", type=float, required=True, help="epsilon_ECE")
    q.add_argument("--delta", type=float, required=True, help="delta_ECE")
    q.add_argument("--gap", type=float, default=0.0)
    q.set_defaults(func=cmd_bound_ece_min_n)
    q = bsub.add_parser("simulate")
    q.add_argument("--p", type=float, required=True)
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--epsilon", type=float, required=True)
    q.add_argument("--trials", type=int, default=10000)
    q.add_argument("--seed", type=int, default=DEFAULT_SEED)
    q.set_defaults(func=cmd_bound_simulate)

    p = sub.add_parser("target", help="write generation specs for miscalibrated bins")
    p.add_argument("input")
    _binning(p, modes=False)
    p.add_argument("--threshold", type=float, default=targeting.DEFAULT_THRESHOLD)
    p.add_argument("--alpha", type=float, help="fixed shift instead of each bin's |gap|")
    p.add_argument("--out")
    p.set_defaults(func=cmd_target)

    p = sub.add_parser("generate", help="two-stage synthetic text generation")
    p.add_argument("--specs", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--backend", choices=["mock", "http"], default="mock")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--k", type=int, default=llm.DEFAULT_K)
    p.add_argument("--max-parallel", type=int, default=4)
    p.add_argument("--strict", action="store_true", help="drop texts relabeled to another class")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("assemble", help="build a Synthesis or Synthesis+ training set")
    p.add_argument("input", help="original records (train + validation)")
    p.add_argument("--specs", required=True)
    p.add_argument("--synthetic", required=True, help="JSONL written by 'generate'")
    p.add_argument("--assembly", choices=[m.value for m in targeting.AssemblyMode],
                   default="synthesis")
    p.add_argument("--strict", action="store_true", help="fail if a spec is under-filled")
    p.add_argument("--out")
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("calibrate", help="fit or apply a post-hoc calibrator")
    csub = p.add_subparsers(dest="calibrate_command", required=True)
    q = csub.add_parser("fit")
    q.add_argument("--method", choices=calibrators.METHODS, required=True)
    q.add_argument("--fit-on", required=True, help="validation records")
    q.add_argument("--labels", default="0,1")
    q.add_argument("--task")
    q.add_argument("--out")
    q.set_defaults(func=cmd_calibrate_fit)
    q = csub.add_parser("apply")
    q.add_argument("calibrator")
    q.add_argument("input")
    q.add_argument("--out")
    q.set_defaults(func=cmd_calibrate_apply)

    p = sub.add_parser("toy", help="1-D logistic synthetic-data experiment")
    tsub = p.add_subparsers(dest="toy_command", required=True)
    q = tsub.add_parser("run")
    q.add_argument("--seed", type=int, default=DEFAULT_SEED)
    q.add_argument("--n", type=int, default=300)
    q.add_argument("--lo", type=float, default=-10.0)
    q.add_argument("--hi", type=float, default=10.0)
    q.add_argument("--beta0", type=float, default=-1.0)
    q.add_argument("--beta1", type=float, default=2.0)
    q.add_argument("--bins", type=int, default=5)
    q.add_argument("--threshold", type=float, default=targeting.DEFAULT_THRESHOLD)
    q.add_argument("--curve-csv", help="also write fitted curves on a grid")
    q.add_argument("--out")
    q.set_defaults(func=cmd_toy_run)
    return parser


def _leaf_parsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                yield child
                yield from _leaf_parsers(child)


def _apply_config(parser, path):
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise InvalidParam("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for p in _leaf_parsers(parser):
        known = {a.dest for a in p._actions}
        p.set_defaults(**{k: v for k, v in cfg.items() if k in known})


def main(argv=None) -> int:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    try:
        known, _ = pre.parse_known_args(argv)
        if known.config:
            _apply_config(parser, known.config)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (CalibError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        args.func(args)
    except (CalibError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
