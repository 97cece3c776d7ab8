"""Run a bundled preset (or a TOML config) end to end and print the metric table.

    python3 scripts/run_preset.py poisson
    python3 scripts/run_preset.py price --replicas 3 --methods copulaABCdrf
    python3 scripts/run_preset.py path/to/config.toml --out out/mine
"""
import argparse
import logging
import time
from pathlib import Path

from copulaabc import config
from copulaabc.evaluation import replicate_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("preset", help=f"one of {', '.join(config.preset_names())}, or a TOML path")
    p.add_argument("--replicas", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--methods", nargs="+")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default: the config's out)")
    p.add_argument("--fresh", action="store_true", help="ignore finished replica files")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    src = args.preset if args.preset.endswith(".toml") else f"preset:{args.preset}"
    rc = config.load(src, {"replicas": args.replicas, "N": args.N, "methods": args.methods,
                           "seed": args.seed, "out": args.out})
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = replicate_experiment(rc.experiment(), out, resume=not args.fresh)
    res.to_csv(out / "metrics.csv")
    print(f"{len(res.replicas)} replicas in {time.perf_counter() - t0:.1f} s -> {out / 'metrics.csv'}")
    wanted = ("mean", "s.d.", "MAE(mean)", "MAE(mode)", "MAE(MLE)", "KS distance", "cover95")
    print(f"{'method':20s} {'parameter':10s} {'statistic':12s} {'mean':>10s} {'sd':>10s}")
    for method, param, stat, m, sd, _ in res.rows:
        if stat in wanted or stat.startswith("p(model"):
            print(f"{method:20s} {param:10s} {stat:12s} {m:10.4f} {'' if sd is None else format(sd, '10.4f'):>10s}")


if __name__ == "__main__":
    main()
