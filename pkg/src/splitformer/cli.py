"""Command-line entry point: ``splitformer {verify,step,converge,train,init}``.

Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.
All output is JSON and depends only on the flags (and ``--seed``).
"""

from __future__ import annotations

import argparse
import datetime
import logging
import sys

import numpy as np

from . import serialize
from .grid import as_grid, tensor_from_dict, tensor_to_dict
from .splitting import MODES, propagate
from .training import Dataset, TrainingDiverged, teacher_student_task, train, vit_toy_task
from .verify import SUITES, run_suite, splitting_order_table

log = logging.getLogger("splitformer")


class UsageError(Exception):
    pass


def _emit(obj, out):
    text = serialize.dump_json(obj, out)
    if out is None:
        sys.stdout.write(text)


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    reports = []
    for name in names:
        kw = {}
        if args.trials is not None and name in ("block-equivalence", "properties"):
            kw["trials"] = args.trials
        rep = run_suite(name, seed=args.seed, **kw)
        if args.timestamp:
            rep.timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        reports.append(rep)
        log.info("%s: %d/%d cases pass", name, sum(c.passed for c in rep.cases), len(rep.cases))
    if len(reports) == 1:
        _emit(reports[0].to_dict(), args.out)
    else:
        _emit({"suites": [r.to_dict() for r in reports], "pass": all(r.passed for r in reports)}, args.out)
    return 0 if all(r.passed for r in reports) else 1


def cmd_step(args) -> int:
    model = serialize.model_from_dict(serialize.load_json(args.model))
    u = as_grid(tensor_from_dict(serialize.load_json(args.input)))
    if u.shape[-2:] != (model.n_x, model.n_y):
        raise UsageError(f"input has shape {list(u.shape)} but the model expects [{model.n_x}, {model.n_y}]")
    if args.trace:
        out, trace = propagate(u, model, return_trace=True)
        _emit({"output": tensor_to_dict(out), "trace": serialize.trace_to_list(trace)}, args.out)
    else:
        _emit(tensor_to_dict(propagate(u, model)), args.out)
    return 0


def cmd_converge(args) -> int:
    table = splitting_order_table()
    _emit({"reference": "matrix exponential", "schemes": table}, args.out)
    ok = all(abs(o - 1.0) <= 0.2 for s in ("lie", "parallel") for o in table[s]["order"])
    ok = ok and max(table["commuting"]["error"]) <= 1e-12
    return 0 if ok else 1


def cmd_train(args) -> int:
    vit = None
    if args.mode == "vit":
        model, vit, data = vit_toy_task(args.seed)
    elif args.model or args.data:
        if not (args.model and args.data):
            raise UsageError("--model and --data must be given together")
        model = serialize.model_from_dict(serialize.load_json(args.model))
        data = Dataset(serialize.dataset_from_list(serialize.load_json(args.data)), "mse")
    else:
        if args.mode not in (None, "vanilla"):
            raise UsageError("the built-in teacher-student task supports --mode vanilla or vit")
        model, data, _ = teacher_student_task(args.seed)
    try:
        res = train(model, data, args.steps, args.lr, seed=args.seed, vit=vit)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.model_out:
        final = {"model": serialize.model_to_dict(res.model)}
        if res.vit is not None:
            final["vit"] = serialize.vit_to_dict(res.vit)
        serialize.dump_json(final, args.model_out)
    _emit(
        {
            "seed": args.seed,
            "mode": args.mode or "vanilla",
            "steps": args.steps,
            "lr": args.lr,
            "loss_kind": data.loss_kind,
            "losses": res.losses,
            "initial_loss": res.losses[0],
            "final_loss": res.losses[-1],
        },
        args.out,
    )
    return 0


def cmd_init(args) -> int:
    from .factory import random_model

    kw = {}
    if args.mode == "cvt":
        side = int(round(np.sqrt(args.n_y)))
        if side * side != args.n_y:
            raise UsageError("cvt mode needs a square n_y (patch grid side x side)")
        kw["patch_shape"] = (side, side)
    model = random_model(args.seed, args.n_x, args.n_y, args.J, args.n_t, args.mode, **kw)
    _emit(serialize.model_to_dict(model), args.out)
    if args.input_out:
        rng = np.random.default_rng(args.seed + 1)
        serialize.dump_json(tensor_to_dict(rng.standard_normal((args.n_x, args.n_y))), args.input_out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--out", help="write JSON here instead of stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="splitformer", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="run verification suites")
    v.add_argument("--suite", default="all", choices=[*SUITES, "all"])
    v.add_argument("--trials", type=int, help="number of random trials where applicable")
    v.add_argument("--timestamp", action="store_true", help="stamp the report (breaks byte-identical reruns)")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("step", parents=[common], help="propagate an input through a model")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--trace", action="store_true", help="include every substep state")
    s.set_defaults(func=cmd_step)

    c = sub.add_parser("converge", parents=[common], help="splitting convergence-order study")
    c.set_defaults(func=cmd_converge)

    t = sub.add_parser("train", parents=[common], help="finite-difference gradient descent on a toy task")
    t.add_argument("--mode", choices=["vanilla", "vit"], default="vanilla")
    t.add_argument("--steps", type=int, default=200)
    t.add_argument("--lr", type=float, default=0.1)
    t.add_argument("--model", help="initial model JSON (with --data)")
    t.add_argument("--data", help="dataset JSON: list of {input, target} tensors")
    t.add_argument("--model-out", help="write the trained parameters here")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("init", parents=[common], help="write a random model file")
    i.add_argument("--mode", choices=list(MODES), default="vanilla")
    i.add_argument("--n-x", type=int, default=4)
    i.add_argument("--n-y", type=int, default=4)
    i.add_argument("--J", type=int, default=2)
    i.add_argument("--n-t", type=int, default=1)
    i.add_argument("--input-out", help="also write a random input tensor here")
    i.set_defaults(func=cmd_init)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
