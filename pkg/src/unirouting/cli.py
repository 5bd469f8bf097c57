"""Command line: generate, train, eval, oracle, synth.

Exit codes: 0 success, 1 usage or configuration error, 2 domain failure
(budget exhausted, infeasible output), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from . import codec
from .variants import ConstraintSpec, SpecError, make_spec

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_IO = 0, 1, 2, 3
EXACT_LIMIT = 12


class UsageError(Exception):
    pass


class DomainError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _spec_from_args(args) -> ConstraintSpec:
    if getattr(args, "spec_file", None):
        with open(args.spec_file) as fh:
            return ConstraintSpec.from_dict(json.load(fh))
    if not args.spec:
        raise UsageError("give --spec NAME or --spec-file PATH")
    try:
        return make_spec(args.spec, args.n)
    except SpecError as exc:
        raise UsageError(f"{exc}") from None


def _instance_files(folder):
    if not os.path.isdir(folder):
        raise FileNotFoundError(f"dataset directory {folder!r} not found")
    names = sorted(f for f in os.listdir(folder) if f.endswith(".json") and f != "manifest.json"
                   and not f.endswith(".ref.json"))
    return [os.path.join(folder, f) for f in names]


def cmd_generate(args) -> int:
    from .instance import generate_instance

    spec = _spec_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    manifest = []
    for i in range(args.count):
        seed = args.seed + i
        inst = generate_instance(spec, seed)
        fname = f"{spec.name}_{spec.n_customers}_{seed}.json"
        codec.write_instance(inst, os.path.join(args.out, fname))
        manifest.append({"file": fname, "sha256": codec.content_hash(inst)})
    codec.atomic_write(os.path.join(args.out, "manifest.json"),
                       json.dumps({"spec": spec.to_dict(), "files": manifest}, indent=1, sort_keys=True) + "\n")
    print(f"wrote {args.count} {spec.name} instances (n={spec.n_customers}) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import load_config, train

    if args.config is not None and not os.path.isfile(args.config):
        raise UsageError(f"config file {args.config!r} not found")
    overrides = {"seed": args.seed, "epochs": args.epochs, "batches_per_epoch": args.batches_per_epoch,
                 "batch_size": args.batch_size, "n_customers": args.n, "max_steps": args.max_steps,
                 "task_set": args.tasks.split(",") if args.tasks else None}
    try:
        cfg = load_config(args.config, args.profile, overrides)
    except (ValueError, TypeError, SpecError) as exc:
        raise UsageError(f"invalid config: {exc}") from None

    def on_epoch(e):
        print(f"epoch {e['epoch']}: steps {e['steps']} mean_reward {e['mean_reward']:.6f} "
              f"feasibility {e['feasibility_rate']:.4f} wall_ms {e['wall_ms']}", flush=True)

    res = train(cfg, out_dir=args.out, on_epoch=on_epoch)
    print(f"checkpoint {res.checkpoint_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    import numpy as np
    import torch

    from .evaluate import default_augmentation, solve_batch
    from .oracle import exact_solve, gap
    from .policy import checkpoint
    from .report import EvalReport, aggregate

    try:
        model, header = checkpoint.load(args.checkpoint)
    except checkpoint.CheckpointError as exc:
        raise DomainError(f"checkpoint {args.checkpoint}: {exc}") from None
    if header.get("lambda_dim") != 13:
        raise DomainError(f"checkpoint problem representation has {header.get('lambda_dim')} bits; this build reads 13")
    groups = {}
    for path in _instance_files(args.data):
        inst = codec.read_instance(path)
        groups.setdefault((inst.spec.name, inst.spec.n_customers), []).append((path, inst))
    if not groups:
        raise DomainError(f"no instances in {args.data}")
    report = EvalReport()
    gen = torch.Generator().manual_seed(args.seed)
    for (name, n), items in sorted(groups.items()):
        insts = [i for _, i in items]
        aug = default_augmentation(insts[0]) if args.augment == "on" else 1
        t0 = time.perf_counter()
        solved = solve_batch(model, insts, aug, args.mode, gen)
        wall = (time.perf_counter() - t0) * 1000
        refs = []
        for path, inst in items:
            ref_path = path[:-5] + ".ref.json"
            if os.path.exists(ref_path):
                with open(ref_path) as fh:
                    refs.append(json.load(fh)["objective"])
            elif inst.spec.n_customers <= EXACT_LIMIT:
                refs.append(exact_solve(inst).objective.value)
            else:
                refs.append(None)
        gaps = [None if r is None else (gap(s.objective, r, s.sense) if s.feasible else np.inf)
                for s, r in zip(solved, refs)]
        report.rows.append(aggregate(f"{name}-{n}", [s.objective for s in solved],
                                     gaps, wall, [s.feasible for s in solved], aug))
    if args.out:
        report.write(args.out)
    print("gap-to-exact is measured against exact optima (n <= 12) or supplied reference files")
    print(report.table())
    return EXIT_OK if all(r.feasibility_rate == 1.0 for r in report.rows) else EXIT_DOMAIN


def cmd_oracle(args) -> int:
    from .feasibility import check_solution
    from .oracle import exact_solve

    out = args.out or args.data
    os.makedirs(out, exist_ok=True)
    skipped = 0
    sums = {}
    for path in _instance_files(args.data):
        inst = codec.read_instance(path)
        if inst.spec.n_customers > EXACT_LIMIT:
            print(f"warning: {os.path.basename(path)} has {inst.spec.n_customers} customers "
                  f"(> {EXACT_LIMIT}); skipped", file=sys.stderr)
            skipped += 1
            continue
        res = exact_solve(inst)
        feasible = check_solution(inst, res.solution).feasible
        doc = codec.solution_to_dict(inst, res.solution, res.objective, feasible)
        target = os.path.join(out, os.path.basename(path)[:-5] + ".ref.json")
        codec.atomic_write(target, codec.dumps(doc) + "\n")
        sums.setdefault(inst.spec.name, []).append(res.objective.value)
    for name, vals in sorted(sums.items()):
        print(f"{name}: {len(vals)} instances, mean optimum {sum(vals) / len(vals):.6f}")
    print(f"skipped {skipped}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .mask_synth import ArtifactCache, HTTPProvider, StubProvider, make_task, synthesize
    from .mask_synth.reference import as_completion, reference_for

    spec = _spec_from_args(args)
    if args.provider == "stub":
        if args.corpus:
            corpus = []
            for p in args.corpus:
                with open(p, encoding="utf-8") as fh:
                    corpus.append(fh.read())
        else:
            ref = reference_for(spec.families)
            if ref is None:
                raise UsageError(f"no built-in reference program for {spec.name}; pass --corpus")
            corpus = [as_completion(ref)]
        provider = StubProvider(corpus)
    else:
        print("live provider: results depend on the remote model and are not deterministic")
        provider = HTTPProvider()
    task = make_task(spec, n_instances=args.instances, rollouts=args.rollouts, seed=args.seed,
                     rounds=args.rounds, candidates_per_round=args.candidates, timeout_ms=args.timeout_ms)
    cache = ArtifactCache(args.cache)

    def on_round(rnd, results):
        rates = ", ".join(f"{r.candidate_id}={r.validity_rate:.3f}" for r in results) or "no candidates"
        print(f"round {rnd}: {rates}")

    art = synthesize(task, provider, cache, on_round)
    if art.cache_hit:
        print(f"cache hit: {cache.path(art.cache_key)} (0 provider calls)")
        return EXIT_OK
    for d in art.diagnostics:
        print(f"diagnostic: {d}")
    if art.accepted:
        print(f"accepted {art.candidate.id} with validity 1.0; cached at {cache.path(art.cache_key)}")
        return EXIT_OK
    print(f"budget exhausted; best validity {art.validity_rate:.4f}")
    return EXIT_DOMAIN


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="unirouting", description="Unified neural routing solver toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", help="write random instances")
    g.add_argument("--spec", help="variant name, e.g. CVRP or OVRPBLTW")
    g.add_argument("--spec-file", help="JSON constraint spec")
    g.add_argument("--n", type=int, default=10, help="customers per instance")
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a policy")
    t.add_argument("--config", help="flat JSON training config")
    t.add_argument("--profile", choices=("desk", "full"), default=None)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batches-per-epoch", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--n", type=int)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--tasks", help="comma-separated variant names")
    t.add_argument("--out", required=True, help="directory for metrics.csv and checkpoints")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--augment", choices=("on", "off"), default="off")
    e.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="report CSV path")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle", help="exact reference solutions for small instances")
    o.add_argument("--data", required=True)
    o.add_argument("--out", help="output directory (default: next to the instances)")
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("synth", help="synthesize a mask program")
    s.add_argument("--spec")
    s.add_argument("--spec-file")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--provider", choices=("stub", "live"), default="stub")
    s.add_argument("--corpus", action="append", help="candidate program file for the stub (repeatable)")
    s.add_argument("--rounds", type=int, default=3)
    s.add_argument("--candidates", type=int, default=4)
    s.add_argument("--timeout-ms", type=int, default=2000)
    s.add_argument("--instances", type=int, default=8)
    s.add_argument("--rollouts", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cache", default=".mask-cache")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except codec.CodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
