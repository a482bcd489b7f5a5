# Command-line driver. Every subcommand is a thin adapter over the library:
# no numerical logic lives here. All randomness flows from explicit --seed
# flags; machine-readable artifacts go only to --out/--trace paths.
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import basealg, dataset as ds, evaluation as ev, funcclass as fc, mdp as mdp_mod
from .selection import modbe, validation_loss

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class CLIError(Exception):
    """Input-validation failure: bad flag value or malformed file."""


def _load_mdp(path: str) -> mdp_mod.TabularMDP:
    try:
        return mdp_mod.load_mdp(path)
    except (OSError, mdp_mod.MDPError) as exc:
        raise CLIError(f"--mdp: {exc}") from exc


def _load_classes(path: str, clip_high: float | None) -> fc.NestedSequence:
    try:
        return fc.load_sequence(path, clip_high=clip_high)
    except (OSError, fc.FunctionClassError) as exc:
        raise CLIError(f"--classes: {exc}") from exc


def _load_dataset(path: str) -> ds.OfflineDataset:
    try:
        return ds.load_dataset_csv(path)
    except (OSError, ds.DatasetError) as exc:
        raise CLIError(f"--data: {exc}") from exc


def _behavior_policy(spec: str, mdp: mdp_mod.TabularMDP) -> mdp_mod.Policy:
    if spec == "uniform":
        return mdp_mod.Policy.uniform(mdp.horizon, mdp.num_states, mdp.num_actions)
    try:
        probs = np.loadtxt(spec).reshape(mdp.horizon, mdp.num_states, mdp.num_actions)
        return mdp_mod.Policy(probs)
    except (OSError, ValueError, mdp_mod.MDPError) as exc:
        raise CLIError(f"--behavior: {exc}") from exc


def _mu_spec(spec: str, mdp: mdp_mod.TabularMDP) -> np.ndarray:
    if spec == "uniform":
        return ev.uniform_mu(mdp)
    try:
        mu = np.loadtxt(spec).reshape(mdp.horizon, mdp.num_states, mdp.num_actions)
        return mdp_mod.check_data_distribution(mdp, mu)
    except (OSError, ValueError, mdp_mod.MDPError) as exc:
        raise CLIError(f"--mu: {exc}") from exc


def cmd_gen_data(args) -> int:
    mdp = _load_mdp(args.mdp)
    pol = _behavior_policy(args.behavior, mdp)
    data, _mu = ds.generate_from_behavior(mdp, pol, args.n, args.seed)
    ds.save_dataset_csv(data, args.out)
    print(f"wrote {data.horizon} x {data.n} transitions to {args.out}")
    return EXIT_OK


def cmd_run_fqi(args) -> int:
    data = _load_dataset(args.data)
    classes = _load_classes(args.classes, clip_high=float(data.horizon))
    if not 1 <= args.k <= len(classes):
        raise CLIError(f"--k: class index {args.k} outside [1, {len(classes)}]")
    split = ds.split_dataset(data, args.seed)
    fseq = basealg.fqi(split.train.steps, classes[args.k])
    print(f"fqi: class {args.k}, horizon {data.horizon}, n_train {split.train.n}")
    for h in range(1, data.horizon + 1):
        step = split.valid.steps[h - 1]
        loss = validation_loss(fseq.func(h), step, fseq.next_state_values(h, step.x_next))
        print(f"  h={h} validation_loss={loss:.6g}")
    if args.out:
        c = classes[args.k]
        S = len(c.blocks) if c.variant == "abstraction" else c.tables[0].shape[0]
        A = c.num_actions if c.variant == "abstraction" else c.tables[0].shape[1]
        xs, as_ = np.divmod(np.arange(S * A), A)
        with open(args.out, "w") as fh:
            for h in range(1, data.horizon + 1):
                vals = fseq.func(h).values(xs, as_)
                fh.write(" ".join(repr(float(v)) for v in vals) + "\n")
        print(f"wrote Q tables to {args.out}")
    return EXIT_OK


def cmd_run_modbe(args) -> int:
    data = _load_dataset(args.data)
    classes = _load_classes(args.classes, clip_high=float(data.horizon))
    base = basealg.make_fqi(data.horizon)
    trace = modbe(data, base, classes, args.delta, args.schedule, args.seed)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace.to_text())
    print(f"selected class: {trace.k_hat} of {len(classes)}")
    print(f"test events: {len(trace.events)} "
          f"(rejections: {sum(e.reject for e in trace.events)})")
    print(f"base calls: {trace.base_calls}, erm calls: {trace.erm_calls}")
    return EXIT_OK


def cmd_run_holdout(args) -> int:
    data = _load_dataset(args.data)
    classes = _load_classes(args.classes, clip_high=float(data.horizon))
    base = basealg.make_fqi(data.horizon)
    k, _fseq, scores = ev.holdout_select(data, base, classes, args.seed)
    print(f"selected class: {k} of {len(classes)}")
    for i, s in enumerate(scores, start=1):
        print(f"  class {i} validation loss {s:.6g}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    mdp = _load_mdp(args.mdp)
    classes = _load_classes(args.classes, clip_high=float(mdp.horizon))
    mu = _mu_spec(args.mu, mdp)
    report = ev.diagnose(classes, mdp, mu)
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        cfg = ev.parse_config(args.config)
    except (OSError, ev.EvalError) as exc:
        raise CLIError(f"--config: {exc}") from exc
    rows = ev.run_experiment(cfg, jobs=args.jobs, record_runtime=not args.no_runtime)
    ev.write_results_csv(rows, cfg.output)
    print(ev.summarize(rows), end="")
    print(f"wrote {len(rows)} rows to {cfg.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="modbe",
        description="Offline RL model selection benchmark harness.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate an offline dataset from a behavior policy")
    g.add_argument("--mdp", required=True, help="MDP file (plain-text format)")
    g.add_argument("--behavior", default="uniform",
                   help="'uniform' or a whitespace policy file of H*S*A probabilities")
    g.add_argument("--n", type=int, required=True, help="samples per step (>= 5)")
    g.add_argument("--seed", type=int, default=0, help="generation seed")
    g.add_argument("--out", required=True, help="output dataset CSV path")
    g.set_defaults(func=cmd_gen_data)

    f = sub.add_parser("run-fqi", help="run fitted Q-iteration with one class")
    f.add_argument("--data", required=True, help="dataset CSV")
    f.add_argument("--classes", required=True, help="nested-sequence description file")
    f.add_argument("--k", type=int, default=1, help="1-based class index (default: 1)")
    f.add_argument("--seed", type=int, default=0, help="split seed")
    f.add_argument("--out", default=None, help="optional output path for Q tables")
    f.set_defaults(func=cmd_run_fqi)

    m = sub.add_parser("run-modbe", help="run the selection loop over nested classes")
    m.add_argument("--data", required=True, help="dataset CSV")
    m.add_argument("--classes", required=True, help="nested-sequence description file")
    m.add_argument("--delta", type=float, default=0.1, help="failure probability (<= 1/e)")
    m.add_argument("--schedule", choices=["theoretical", "practical"],
                   default="theoretical", help="tolerance schedule (default: theoretical)")
    m.add_argument("--seed", type=int, default=0, help="split seed")
    m.add_argument("--trace", default=None, help="optional output path for the full trace")
    m.set_defaults(func=cmd_run_modbe)

    h = sub.add_parser("run-holdout", help="hold-out baseline selection")
    h.add_argument("--data", required=True, help="dataset CSV")
    h.add_argument("--classes", required=True, help="nested-sequence description file")
    h.add_argument("--seed", type=int, default=0, help="split seed")
    h.set_defaults(func=cmd_run_holdout)

    d = sub.add_parser("diagnose", help="ground-truth diagnostics for an instance")
    d.add_argument("--mdp", required=True, help="MDP file")
    d.add_argument("--classes", required=True, help="nested-sequence description file")
    d.add_argument("--mu", default="uniform",
                   help="'uniform' or a file of H*S*A probabilities (default: uniform)")
    d.set_defaults(func=cmd_diagnose)

    b = sub.add_parser("bench", help="run a benchmark sweep from a config file")
    b.add_argument("--config", required=True, help="plain-text key=value config file")
    b.add_argument("--jobs", type=int, default=1, help="parallel cell workers (default: 1)")
    b.add_argument("--no-runtime", action="store_true",
                   help="leave runtime_ms empty for byte-stable output")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (mdp_mod.MDPError, ds.DatasetError, fc.FunctionClassError, ev.EvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
