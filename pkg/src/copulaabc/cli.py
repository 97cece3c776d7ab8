"""Command-line entry point: ``copulaabc <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, reftable
from . import config as cfgmod
from .drf import ForestConfig
from .evaluation import config_hash, replicate_experiment
from .inference import METHODS, InferenceConfig, copula_abc, select_model
from .models.registry import model_from_dict
from .network import read_edgelist
from .rejection import preselect, rejection_abc

log = logging.getLogger("copulaabc")


# --- helpers ------------------------------------------------------------------------------

def _fail(msg: str, code: int = 1):
    print(f"copulaabc: error: {msg}", file=sys.stderr)
    raise SystemExit(code)


def _overrides(args) -> dict:
    out = {}
    for key in ("seed", "out", "threads", "q", "marginal", "nplus"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


def _load_config(args):
    try:
        return cfgmod.load(args.config, _overrides(args))
    except cfgmod.ConfigError as exc:
        _fail(str(exc), 2)
    except FileNotFoundError:
        _fail(f"config file not found: {args.config}", 2)


def _table_models(table):
    return [model_from_dict(m) for m in table.meta["models"]]


def _read_observed(path, model):
    if model.is_network:
        directed = model.kind == "price" and not model.options.get("undirected")
        return read_edgelist(path, directed=directed)
    return np.loadtxt(path, delimiter=",", ndmin=2, comments="#")


def _observed_summaries(args, table, models, truth_model=0):
    if args.summaries is not None:
        s = np.array([float(v) for v in args.summaries.split(",")])
        if s.size != table.p:
            _fail(f"--summaries has {s.size} values but the table has {table.p} summaries", 2)
        return s, None
    if args.observed is None:
        _fail("give --observed FILE or --summaries v1,v2,...", 2)
    data = _read_observed(args.observed, models[truth_model])
    return models[truth_model].summarize(data), data


def _inference_config(args, rc=None) -> InferenceConfig:
    base = rc.inference if rc is not None else InferenceConfig(ForestConfig(seed=args.seed or 0))
    kw = {"workers": args.threads or base.workers}
    if args.marginal is not None:
        kw["marginal"] = args.marginal
    if args.nplus is not None:
        kw["n_plus"] = args.nplus
    return replace(base, **kw)


def _hash_for(table, args, icfg, extra=None) -> str:
    meta = {k: v for k, v in table.meta.items() if k != "created"}
    return config_hash({"table": meta, "method": getattr(args, "method", None),
                        "seed": args.seed, "q": getattr(args, "q", None),
                        "inference": repr(replace(icfg, workers=1)), **(extra or {})})


def _write_plot_data(rep, out: Path, chash: str) -> None:
    """(value, weight) atoms and a density curve per parameter, as CSV."""
    pdir = out / "plots"
    pdir.mkdir(parents=True, exist_ok=True)
    for k, name in enumerate(rep.param_names):
        w = rep.atom_weights[k]
        keep = w > 0
        x = rep.atoms[keep, k]
        order = np.argsort(x, kind="stable")
        np.savetxt(pdir / f"weights_{name}.csv", np.column_stack([x[order], w[keep][order]]),
                   delimiter=",", header=f"# config_hash={chash}\nvalue,weight", comments="", fmt="%.17g")
        lo, hi = np.quantile(x, [0.001, 0.999]) if x.size > 1 else (x[0] - 1, x[0] + 1)
        pad = 0.1 * (hi - lo if hi > lo else 1.0)
        grid = np.linspace(lo - pad, hi + pad, 512)
        hist, edges = np.histogram(x, bins=min(50, max(5, int(np.sqrt(x.size)))), weights=w[keep],
                                   range=(grid[0], grid[-1]), density=True)
        mids = 0.5 * (edges[1:] + edges[:-1])
        np.savetxt(pdir / f"density_{name}.csv", np.column_stack([mids, hist]), delimiter=",",
                   header=f"# config_hash={chash}\nvalue,density", comments="", fmt="%.10g")


# --- subcommands ----------------------------------------------------------------------------

def cmd_build_table(args) -> int:
    rc = _load_config(args)
    out = Path(args.out or Path(rc.out) / "table.bin")
    out.parent.mkdir(parents=True, exist_ok=True)
    table = reftable.build(rc.models, rc.N, rc.n_sim, rc.seed, rc.model_prior, workers=rc.threads)
    table.meta["config_hash"] = config_hash(rc.raw)
    reftable.save(table, out)
    print(f"wrote {table.N} rows ({table.meta['n_dropped']} dropped) to {out}")
    return 0


def _load_table(args):
    if args.table is None:
        _fail("--table is required", 2)
    try:
        return reftable.load(args.table)
    except (OSError, ValueError) as exc:
        _fail(f"cannot read table {args.table}: {exc}")


def cmd_infer(args) -> int:
    if args.method not in METHODS:
        _fail(f"unknown method {args.method!r}; choose from {', '.join(METHODS)}", 2)
    rc = _load_config(args) if args.config else None
    table = _load_table(args)
    models = _table_models(table)
    s_obs, data = _observed_summaries(args, table, models)
    icfg = _inference_config(args, rc)
    seed = args.seed if args.seed is not None else (rc.seed if rc else 0)
    q = args.q if args.q is not None else (rc.q if rc else 0.01)
    if any(m.prior.__class__.__name__ == "GPrior" for m in models):
        if data is None:
            _fail("a g-prior model needs --observed data to resolve its prior", 2)
        models = [m.resolve_prior(data) for m in models]
    spec = models[0]
    if args.method == "copulaABCdrf":
        rep = copula_abc(table, s_obs, spec.prior, icfg, seed, spec.summary_groups)
        if rep.model_index is not None:
            spec = models[rep.model_index]
    else:
        cols = None
        if args.method == "rejectionABCselect":
            cols = preselect(table, spec.d, icfg.forest, seed, icfg.workers)
        rep = rejection_abc(table, s_obs, spec.prior, q, columns=cols)
    out = Path(args.out or "report")
    out.mkdir(parents=True, exist_ok=True)
    h = _hash_for(table, args, icfg)
    rep.to_csv(out / "report.csv", extra_header=f"config_hash={h}")
    rep.to_json(out / "report.json", {"config_hash": h, "summaries_observed": s_obs.tolist()})
    _write_plot_data(rep, out, h)
    print(f"{rep.method}: wrote {out / 'report.csv'}")
    return 0


def cmd_reject(args) -> int:
    if args.method == "copulaABCdrf":
        args.method = "rejectionABC"
    return cmd_infer(args)


def cmd_select_model(args) -> int:
    rc = _load_config(args) if args.config else None
    table = _load_table(args)
    models = _table_models(table)
    s_obs, _ = _observed_summaries(args, table, models)
    icfg = _inference_config(args, rc)
    sel = select_model(table, s_obs, icfg, args.seed or 0)
    out = Path(args.out or "selection")
    out.mkdir(parents=True, exist_ok=True)
    h = _hash_for(table, args, icfg)
    lines = [f"# config_hash={h}", "model,name,probability"]
    lines += [f"{m},{models[m].name},{p:.17g}" for m, p in enumerate(sel.probs)]
    (out / "model_probs.csv").write_text("\n".join(lines) + "\n")
    (out / "model_probs.json").write_text(json.dumps(
        {"config_hash": h, "probabilities": sel.probs.tolist(), "best": sel.best,
         "best_name": models[sel.best].name}, indent=2))
    print(f"selected model {sel.best} ({models[sel.best].name}), p = {sel.probs[sel.best]:.4f}")
    return 0


def cmd_replicate(args) -> int:
    rc = _load_config(args)
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        exp = rc.experiment()
    except cfgmod.ConfigError as exc:
        _fail(str(exc), 2)
    res = replicate_experiment(exp, out_dir=out, resume=not args.fresh)
    res.to_csv(out / "metrics.csv")
    import numba
    import scipy
    prov = {
        "config_hash": res.config_hash, "config": rc.raw, "seed": rc.seed,
        "replica_seeds": {"observed": [[rc.seed, 1, r] for r in range(rc.replicas)],
                          "table": [rc.seed, 2], "forests": [rc.seed, 3]},
        "versions": {"copulaabc": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__},
        "runtimes": [r.get("runtime", {}) for r in res.replicas],
    }
    (out / "provenance.json").write_text(json.dumps(prov, indent=2, sort_keys=True, default=str))
    print(f"wrote {out / 'metrics.csv'} ({len(res.rows)} rows)")
    return 0


def cmd_export_csv(args) -> int:
    table = _load_table(args)
    out = Path(args.out or Path(args.table).with_suffix(".csv"))
    reftable.export_csv(table, out)
    print(f"wrote {out}")
    return 0


# --- parser ----------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="copulaabc", description="Copula and forest based ABC.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required,
                        help="TOML config file, or preset:NAME for a shipped preset")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--threads", type=int)

    def inference_flags(sp, default_method):
        sp.add_argument("--table")
        sp.add_argument("--observed", help="data file: CSV rows, or an edge list for network models")
        sp.add_argument("--summaries", help="comma-separated observed summary values")
        sp.add_argument("--method", default=default_method)
        sp.add_argument("--q", type=float)
        sp.add_argument("--marginal", choices=("hist", "kde"))
        sp.add_argument("--nplus", type=int)

    sp = sub.add_parser("build-table", help="simulate and save a reference table")
    common(sp, True)
    sp.set_defaults(func=cmd_build_table)

    sp = sub.add_parser("infer", help="posterior report for observed data")
    common(sp)
    inference_flags(sp, "copulaABCdrf")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("reject", help="rejection ABC report")
    common(sp)
    inference_flags(sp, "rejectionABC")
    sp.set_defaults(func=cmd_reject)

    sp = sub.add_parser("select-model", help="posterior model probabilities")
    common(sp)
    inference_flags(sp, "copulaABCdrf")
    sp.set_defaults(func=cmd_select_model)

    sp = sub.add_parser("replicate", help="run a replicated simulation study")
    common(sp, True)
    sp.add_argument("--q", type=float)
    sp.add_argument("--marginal", choices=("hist", "kde"))
    sp.add_argument("--nplus", type=int)
    sp.add_argument("--fresh", action="store_true", help="ignore finished replica files")
    sp.set_defaults(func=cmd_replicate)

    sp = sub.add_parser("export-csv", help="write a reference table as CSV")
    sp.add_argument("--table", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_export_csv)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, ArithmeticError) as exc:
        _fail(str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
