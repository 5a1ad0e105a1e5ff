"""Command-line entry point.

    ragek validate --config CFG
    ragek run      --config CFG [--out DIR] [--seed N] [--variant NAME]
    ragek compare  --config CFG [--out DIR] [--seed N] [--seeds COUNT] [--variant NAME ...]
    ragek heatmap  --run DIR

Output directories default to ``$RAGEK_OUT`` (or ``./runs``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import clustering
from .config import ConfigError, RunConfig
from .orchestrator import read_checkpoint, run
from .sparsifiers import SPARSIFIERS

log = logging.getLogger("ragek")

EXIT_RUNTIME = 1
EXIT_USAGE = 2


def default_root():
    return Path(os.environ.get("RAGEK_OUT", "runs"))


def load_config(path, seed=None, variant=None):
    try:
        cfg = RunConfig.load(path)
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if variant is not None:
            changes["sparsifier"] = variant
        return cfg.replace(**changes).validate()
    except ConfigError:
        raise
    except (OSError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_validate(args):
    cfg = load_config(args.config, args.seed, args.variant)
    print(f"config ok: {args.config}")
    print(f"d={cfg.dim}")
    print(f"sparsifier={cfg.sparsifier} r={cfg.r} k={cfg.k} H={cfg.local_steps} "
          f"M={cfg.recluster_period} T={cfg.iterations} clients={cfg.num_clients}")
    return 0


def cmd_run(args):
    cfg = load_config(args.config, args.seed, args.variant)
    out = Path(args.out) if args.out else default_root() / f"{cfg.sparsifier}_seed{cfg.seed}"
    report = run(cfg)
    report.save(out)
    s = report.summary()
    print(f"wrote {out}: {s['global_rounds']} global rounds, "
          f"final mean accuracy {s['final_mean_accuracy']:.4f}, rounds to target {s['rounds_to_target']}")
    return 0


def _one(cfg, out):
    report = run(cfg)
    report.save(out)
    return cfg.sparsifier, cfg.seed, report.rounds_to_accuracy(cfg.target_accuracy), report.rows[-1]["mean_accuracy"]


def cmd_compare(args):
    base = load_config(args.config)
    variants = args.variant or ["ragek", "rtopk"]
    first = base.seed if args.seed is None else args.seed
    seeds = list(range(first, first + args.seeds))
    out = Path(args.out) if args.out else default_root() / "compare"
    jobs = []
    for v in variants:
        for s in seeds:
            try:
                cfg = base.replace(sparsifier=v, seed=s).validate()
            except ConfigError as exc:
                raise ConfigError(f"variant {v}: {exc}") from exc
            jobs.append((cfg, out / f"{v}_seed{s}"))

    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_one, *zip(*jobs)))
    else:
        rows = [_one(cfg, o) for cfg, o in jobs]

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "seed", "rounds_to_target", "final_mean_accuracy"])
        for v, s, rounds, acc in rows:
            w.writerow([v, s, "" if rounds is None else rounds, repr(acc)])

    medians = {}
    for v in variants:
        # a run that never reaches the target counts as infinitely slow
        rs = [np.inf if r is None else r for vv, _, r, _ in rows if vv == v]
        medians[v] = float(np.median(rs))
    (out / "medians.json").write_text(json.dumps(
        {"target_accuracy": base.target_accuracy, "seeds": seeds,
         "median_rounds_to_target": {v: (None if np.isinf(m) else m) for v, m in medians.items()}},
        indent=2) + "\n")
    print(f"{'variant':<8} median rounds to {base.target_accuracy:.0%}")
    for v, m in medians.items():
        print(f"{v:<8} {m}")
    print(f"wrote {out / 'summary.csv'} ({len(rows)} rows)")
    return 0


def cmd_heatmap(args):
    run_dir = Path(args.run)
    ckpt = run_dir / "checkpoint.bin"
    if not ckpt.exists():
        raise FileNotFoundError(f"{ckpt} not found; is {run_dir} a finished run?")
    with open(ckpt, "rb") as fh:
        _, _, _, freqs = read_checkpoint(fh)
    S = clustering.similarity_matrix(freqs)
    D = clustering.similarity_to_distance(S)
    clustering.write_matrix_csv(run_dir / "heatmap_similarity.csv", S)
    clustering.write_matrix_csv(run_dir / "heatmap_distance.csv", D)
    events = sorted(p.name for p in run_dir.glob("similarity_t*.csv"))
    print(f"wrote {run_dir / 'heatmap_similarity.csv'} and heatmap_distance.csv from final frequencies")
    for name in events:
        print(f"  recluster dump: {name}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ragek", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, variant=True):
        sp.add_argument("--config", required=True, help="YAML run configuration")
        if seed:
            sp.add_argument("--seed", type=int, help="override the master seed")
        if variant:
            sp.add_argument("--variant", choices=sorted(SPARSIFIERS), help="override the sparsifier")

    common(sub.add_parser("validate", help="check a config without running it"))
    sp = sub.add_parser("run", help="run one experiment")
    common(sp)
    sp.add_argument("--out", help="run directory")
    sp = sub.add_parser("compare", help="run every variant for several seeds")
    common(sp, variant=False)
    sp.add_argument("--variant", action="append", choices=sorted(SPARSIFIERS),
                    help="sparsifier to include (repeatable; default ragek and rtopk)")
    sp.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.add_argument("--out", help="suite directory")
    sp = sub.add_parser("heatmap", help="re-emit similarity matrices from a finished run")
    sp.add_argument("--run", required=True, help="run directory")
    return p


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "compare": cmd_compare, "heatmap": cmd_heatmap}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"ragek: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"ragek: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        log.debug("runtime failure", exc_info=True)
        print(f"ragek: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
