"""Command line interface: generate / train / evaluate / report / gradcheck.

Exit codes: 0 success, 1 usage problems, 2 integrity or numerical failures.
"""

import argparse
import dataclasses
import sys

from .errors import IntegrityError, NumericalError, UsageError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _build_parser():
    p = _Parser(prog="dmevqa",
                description="Consistency-trained VQA on synthetic fundus scenes")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset directory")
    g.add_argument("--out", required=True)
    g.add_argument("--scenes", type=int, required=True,
                   help="training scenes; val/test default to 1/4 and 1/3 of this")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--image-size", type=int, default=64)
    g.add_argument("--val-scenes", type=int, default=None)
    g.add_argument("--test-scenes", type=int, default=None)

    t = sub.add_parser("train", help="train one model into an output directory")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--method", choices=["baseline", "consistency", "squint"],
                   default=None)
    t.add_argument("--lambda", dest="lam", type=float, default=None)
    t.add_argument("--gamma", type=float, default=None)
    t.add_argument("--squint-lambda", type=float, default=None)
    t.add_argument("--stop-grad-main", action="store_true", default=None)
    t.add_argument("--pair-quota", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--max-epochs", type=int, default=None)
    t.add_argument("--patience", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--config", default=None, help="key-value run config file")
    t.add_argument("--model-config", default=None,
                   help="key-value model config overrides")
    t.add_argument("--no-test-eval", action="store_true",
                   help="skip the test-split evaluation after training")

    e = sub.add_parser("evaluate", help="evaluate a checkpoint on one split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=["train", "val", "test"], required=True)
    e.add_argument("--out", required=True)

    r = sub.add_parser("report", help="comparison table over finished runs")
    r.add_argument("--runs", nargs="+", required=True)
    r.add_argument("--sweep", action="store_true",
                   help="emit a lambda/gamma grid instead of the method table")
    r.add_argument("--listing-limit", type=int, default=10)

    c = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    c.add_argument("--points", type=int, default=100,
                   help="random points per op and per loss composite")
    c.add_argument("--skip-model", action="store_true")
    return p


def _cmd_generate(args):
    from .config import GenConfig, QAConfig
    from .dataset import generate_dataset
    counts = generate_dataset(args.out, args.scenes, args.seed,
                              GenConfig(image_size=args.image_size), QAConfig(),
                              val_scenes=args.val_scenes, test_scenes=args.test_scenes)
    print(f"wrote {args.out}: scenes train={counts['train']} "
          f"val={counts['val']} test={counts['test']}")
    return 0


def _run_config_from_args(args):
    from .config import RunConfig, from_kv, parse_kv
    base = {}
    if args.config:
        with open(args.config) as f:
            base = parse_kv(f.read())
    cfg = from_kv(RunConfig, base)
    overrides = {name: getattr(args, name) for name in
                 ("method", "lam", "gamma", "squint_lambda", "stop_grad_main",
                  "pair_quota", "batch_size", "lr", "max_epochs", "patience", "seed")
                 if getattr(args, name) is not None}
    overrides["data_dir"] = args.data
    overrides["output_dir"] = args.out
    return dataclasses.replace(cfg, **overrides).validate()


def _cmd_train(args):
    from . import train as trainmod
    from .config import ModelConfig, from_kv, parse_kv, to_kv
    from .dataset import Dataset
    from .evaluate import evaluate_to_dir
    run_cfg = _run_config_from_args(args)
    model_cfg = None
    if args.model_config:
        base = trainmod.default_model_config(Dataset(run_cfg.data_dir))
        with open(args.model_config) as f:
            merged = {**parse_kv(to_kv(base)), **parse_kv(f.read())}
        model_cfg = from_kv(ModelConfig, merged)
    ckpt, history = trainmod.train(run_cfg, model_cfg)
    print(f"trained {run_cfg.method} seed={run_cfg.seed}: {len(history)} epochs, "
          f"best val acc {max(h['val_accuracy'] for h in history):.2f}")
    if not args.no_test_eval:
        _, rep = evaluate_to_dir(ckpt, run_cfg.data_dir, "test", run_cfg.output_dir)
        print(f"test: overall {rep['accuracy_overall']:.2f} "
              f"grade {rep['accuracy_grade']:.2f} "
              f"C1 {_fmt(rep['c1'])} C2 {_fmt(rep['c2'])}")
    return 0


def _fmt(v):
    return "n/a" if v is None else f"{v:.2f}"


def _cmd_evaluate(args):
    from .evaluate import evaluate_to_dir
    _, rep = evaluate_to_dir(args.ckpt, args.data, args.split, args.out)
    print(f"{args.split}: overall {_fmt(rep['accuracy_overall'])} "
          f"grade {_fmt(rep['accuracy_grade'])} whole {_fmt(rep['accuracy_whole'])} "
          f"macula {_fmt(rep['accuracy_macula'])} region {_fmt(rep['accuracy_region'])} "
          f"C1 {_fmt(rep['c1'])} C2 {_fmt(rep['c2'])}")
    return 0


def _cmd_report(args):
    from . import report as repmod
    if args.sweep:
        print(repmod.sweep_grid(args.runs))
        print()
        print(repmod.sweep_grid(args.runs, column="accuracy_overall"))
    else:
        print(repmod.comparison_table(args.runs))
        print()
        print("inconsistent scenes (first run):")
        print(repmod.inconsistency_listing(args.runs[0], limit=args.listing_limit))
    return 0


def _cmd_gradcheck(args):
    from .gradcheck import run_all
    ok, entries = run_all(include_model=not args.skip_model,
                          op_points=args.points, loss_points=args.points)
    for e in entries:
        status = "ok  " if e["ok"] else "FAIL"
        print(f"{status} {e['name']:<24} max_rel_error={e['max_rel_error']:.3e}")
    if not ok:
        worst = max((e for e in entries if not e["ok"]),
                    key=lambda e: e["max_rel_error"])
        print(f"worst offender: {worst['name']} "
              f"(max_rel_error={worst['max_rel_error']:.3e})", file=sys.stderr)
        return 2
    print("all gradient checks passed")
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {"generate": _cmd_generate, "train": _cmd_train,
                "evaluate": _cmd_evaluate, "report": _cmd_report,
                "gradcheck": _cmd_gradcheck}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IntegrityError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
