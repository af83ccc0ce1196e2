"""Command-line experiment runner.

Every flag can also be given as a key of a JSON file passed with
``--config``; explicit flags win over the file.  ``FJSIM_SEED`` replaces
the seed from the file or the default, but not an explicit ``--seed``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings

from . import analytic, codec, dists, multigroup, simcore
from .analytic import SystemParams, Unstable

EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_CHECK = 0, 2, 3, 4

SUMMARY_COLUMNS = [
    "n", "k", "lambda", "mu", "dist", "delta", "policy", "mode",
    "mean", "ci95", "p50", "p90", "p99", "samples", "seed",
]

DEFAULTS = {
    "n": 10,
    "k": None,
    "lam": 1.0,
    "mu": 3.0,
    "dist": "exponential",
    "alpha": None,
    "delta": None,
    "cancel": "immediate",
    "mode": "fork_join",
    "horizon": 200_000,
    "warmup": None,
    "reps": 5,
    "seed": 1,
    "workers": 1,
    "backend": None,
    "out": None,
    "m": 40,
    "policies": ["random", "pod", "lwl"],
    "d": 2,
    "metric": "jobs_in_group",
    "ratio": None,
    "at": [0.1, 0.4],
    "single_disk": True,
    "out_dir": ".",
    "ecdf_out": None,
    "trace_out": None,
    "plot_spec": None,
    "sigma": None,
    "cnk": None,
}


class ConfigError(ValueError):
    pass


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _emit(text: str, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# configuration -------------------------------------------------------------

def _as_list(v, cast=float):
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return [cast(x) for x in v]
    if isinstance(v, str):
        return [cast(x) for x in v.replace(",", " ").split()]
    return [cast(v)]


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, JSON config, FJSIM_SEED and explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        file_cfg = dict(file_cfg)
        if "lambda" in file_cfg:
            file_cfg["lam"] = file_cfg.pop("lambda")
        if isinstance(file_cfg.get("policy"), dict):
            pol = file_cfg.pop("policy")
            file_cfg["policies"] = [pol["policy"]]
            if "d" in pol:
                file_cfg["d"] = pol["d"]
        cfg.update({key.replace("-", "_"): val for key, val in file_cfg.items()})
    env_seed = os.environ.get("FJSIM_SEED")
    if env_seed:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"FJSIM_SEED must be an integer, got {env_seed!r}") from None
    for key, val in vars(args).items():
        if key in ("command", "config", "func", "check") or val is None:
            continue
        cfg[key] = val
    return cfg


def _service_for(cfg, kind, mu_prime, alpha=None, delta=None):
    if isinstance(kind, dict):
        return dists.from_dict(kind)
    if kind == "exponential":
        return dists.Exponential(mu_prime)
    if kind == "deterministic":
        return dists.Deterministic(1.0 / mu_prime)
    if kind == "pareto":
        if alpha is None:
            raise ConfigError("pareto service needs --alpha")
        if math.isinf(alpha):
            return dists.Deterministic(1.0 / mu_prime)
        return dists.pareto_for_mean(1.0 / mu_prime, alpha)
    if kind == "correlated_exp":
        return dists.CorrelatedExpMix(mu_prime, delta or 0.0)
    raise ConfigError(f"unknown distribution {kind!r}")


def _dist_label(service, delta=0.0):
    if isinstance(service, dists.Exponential):
        return "exponential"
    if isinstance(service, dists.Pareto):
        return f"pareto:{service.alpha!r}"
    if isinstance(service, dists.Deterministic):
        return "deterministic"
    return f"correlated_exp:{delta!r}"


def _fj_config(n, k, lam, mu, service, delta=0.0, cancel="immediate", mode="fork_join"):
    return simcore.ForkJoinConfig(SystemParams(n, k, lam, mu), service, delta, cancel, mode)


def _simulate_row(cfg, fj, extra=None):
    res = simcore.run_replications(
        fj, cfg["horizon"], cfg["warmup"], cfg["reps"], cfg["seed"],
        workers=cfg["workers"], backend=cfg["backend"],
    )
    p = fj.params
    row = {
        "n": p.n, "k": p.k, "lambda": p.lam, "mu": p.mu,
        "dist": _dist_label(fj.service, fj.delta), "delta": fj.delta,
        "policy": "", "mode": fj.mode,
        "mean": res.mean, "ci95": res.ci95, "p50": res.p50, "p90": res.p90, "p99": res.p99,
        "samples": res.count, "seed": cfg["seed"], "digest": res.digest,
    }
    row.update(extra or {})
    return row, res


# subcommands ---------------------------------------------------------------

def _single_config(cfg):
    n = int(cfg["n"])
    k = int(cfg["k"] if cfg["k"] is not None else n)
    delta = float(cfg["delta"] or 0.0)
    kind = cfg["dist"]
    if delta and kind == "exponential":
        kind = "correlated_exp"
    service = _service_for(cfg, kind, k * cfg["mu"], cfg["alpha"], delta)
    if isinstance(service, dists.CorrelatedExpMix):
        delta = service.delta
    return _fj_config(n, k, cfg["lam"], cfg["mu"], service, delta, cfg["cancel"], cfg["mode"])


def cmd_simulate(cfg):
    fj = _single_config(cfg)
    row, res = _simulate_row(cfg, fj)
    outputs = {"summary": _csv_text(SUMMARY_COLUMNS + ["digest"], [row])}
    if cfg["ecdf_out"]:
        outputs["ecdf"] = _csv_text(["t", "probability"], [
            {"t": t, "probability": p} for t, p in res.ecdf_rows()
        ])
    return outputs


def _sweep_points(cfg):
    n_fixed = int(cfg["n"])
    ks = _as_list(cfg["k"], int) or list(range(1, n_fixed + 1))
    ratio = cfg["ratio"]
    points = []
    for k in ks:
        if ratio:
            n = k / float(ratio)
            if abs(n - round(n)) > 1e-9:
                raise ConfigError(f"k={k} is incompatible with k/n={ratio}")
            n = int(round(n))
        else:
            n = n_fixed
        points.append((n, k))
    return points


def _dist_grid(cfg):
    kind = cfg["dist"]
    alphas = _as_list(cfg["alpha"])
    deltas = _as_list(cfg["delta"])
    if alphas:
        return [("deterministic" if math.isinf(a) else "pareto", a, 0.0) for a in alphas]
    if deltas:
        return [("correlated_exp" if d else "exponential", None, d) for d in deltas]
    return [(kind, None, 0.0)]


def cmd_sweep(cfg):
    rows = []
    baseline = {}
    grid = _dist_grid(cfg)
    for kind, alpha, delta in grid:
        block = []
        for n, k in _sweep_points(cfg):
            mu_prime = k * cfg["mu"]
            service = _service_for(cfg, kind, mu_prime, alpha, delta)
            fj = _fj_config(n, k, cfg["lam"], cfg["mu"], service, delta, cfg["cancel"], cfg["mode"])
            extra = {"alpha": alpha}
            p = fj.params
            if isinstance(service, dists.Exponential):
                rep = analytic.bounds(p)
                extra.update(lower=rep.lower, upper=rep.upper, stable=rep.stable)
            else:
                extra.update(_general_bound(p, service))
            row, _ = _simulate_row(cfg, fj, extra)
            if delta == 0.0:
                baseline[(n, k)] = row["mean"]
            block.append(row)
        best = min(block, key=lambda r: (r["mean"], r["k"]))["k"]
        for row in block:
            row["argmin_k"] = best
        rows.extend(block)
    for row in rows:
        if row["delta"]:
            key = (row["n"], row["k"])
            if key not in baseline:
                fj = _fj_config(row["n"], row["k"], cfg["lam"], cfg["mu"], None)
                baseline[key] = _simulate_row(cfg, fj)[0]["mean"]
            p = SystemParams(row["n"], row["k"], cfg["lam"], cfg["mu"])
            row["formula"] = analytic.correlated_mean(p, row["delta"], baseline[key])
    cols = SUMMARY_COLUMNS + ["alpha", "lower", "upper", "stable", "argmin_k", "formula", "digest"]
    return {"summary": _csv_text(cols, rows)}


def _general_bound(p, service):
    try:
        es = dists.mean(service)
        sigma = math.sqrt(dists.variance(service))
    except dists.MomentUndefined:
        return {"lower": None, "upper": None, "stable": None}
    if isinstance(service, dists.CorrelatedExpMix):
        return {"lower": None, "upper": None, "stable": None}
    try:
        up = analytic.upper_bound_general(p.n, p.k, p.lam, es, sigma, analytic.cnk_two_point(p.n, p.k))
        return {"lower": None, "upper": up, "stable": True}
    except Unstable:
        return {"lower": None, "upper": None, "stable": False}


def cmd_cdf(cfg):
    n = int(cfg["n"])
    ks = _as_list(cfg["k"], int) or [1, 2, 5, 10]
    ats = _as_list(cfg["at"])
    systems = [(n, k) for k in ks]
    if cfg["single_disk"]:
        systems.insert(0, (1, 1))
    outputs = {}
    rows = []
    for nn, k in systems:
        fj = _fj_config(nn, k, cfg["lam"], cfg["mu"], None)
        row, res = _simulate_row(cfg, fj)
        for t in ats:
            row[f"ecdf@{t!r}"] = res.ecdf_at(t)
        rows.append(row)
        outputs[f"ecdf_n{nn}_k{k}.csv"] = _csv_text(["t", "probability"], [
            {"t": t, "probability": p} for t, p in res.ecdf_rows()
        ])
    cols = SUMMARY_COLUMNS + [f"ecdf@{t!r}" for t in ats] + ["digest"]
    outputs["summary"] = _csv_text(cols, rows)
    return outputs


def cmd_bounds(cfg):
    if cfg["k"] is None:
        raise ConfigError("bounds needs --k")
    p = SystemParams(int(cfg["n"]), int(cfg["k"]), cfg["lam"], cfg["mu"])
    report = analytic.bounds(p)
    out = report.to_dict()
    if cfg["sigma"] is not None:
        cnk = cfg["cnk"] if cfg["cnk"] is not None else analytic.cnk_two_point(p.n, p.k)
        try:
            out["upper_general"] = analytic.upper_bound_general(
                p.n, p.k, p.lam, 1.0 / p.mu_prime, cfg["sigma"], cnk)
        except Unstable:
            out["upper_general"] = None
        out["cnk"] = cnk
    return {"summary": json.dumps(out, indent=2, sort_keys=True) + "\n", "_stable": report.stable}


def cmd_mnk(cfg):
    k = int(cfg["k"] if cfg["k"] is not None else 5)
    pols = cfg["policies"]
    if isinstance(pols, str):
        pols = pols.replace(",", " ").split()
    base = multigroup.MultiGroupConfig(int(cfg["m"]), int(cfg["n"]), k, cfg["lam"], cfg["mu"],
                                       "random", None, cfg["metric"], cancel=cfg["cancel"])
    pairs = [(pol, int(cfg["d"]) if multigroup._POLICY_ALIASES.get(pol, pol) == "pod" else None) for pol in pols]
    results = multigroup.compare_policies(base, pairs, cfg["horizon"], cfg["warmup"], cfg["reps"], cfg["seed"],
                                          backend=cfg["backend"])
    rows = []
    for label, res in results.items():
        rows.append({
            "m": base.m, "n": base.n, "k": base.k, "lambda": base.lam, "mu": base.mu,
            "dist": "exponential", "delta": 0.0, "policy": label, "mode": "fork_join",
            "mean": res.mean, "ci95": res.ci95, "p50": res.p50, "p90": res.p90, "p99": res.p99,
            "samples": res.count, "seed": cfg["seed"], "digest": res.digest,
        })
    return {"summary": _csv_text(["m"] + SUMMARY_COLUMNS + ["digest"], rows)}


def cmd_encode(cfg):
    path = cfg["input"]
    with open(path, "rb") as fh:
        content = fh.read()
    n, k = int(cfg["n"]), int(cfg["k"] if cfg["k"] is not None else cfg["n"])
    obj = codec.encode(content, n, k)
    stem = cfg.get("stem") or os.path.basename(path)
    man = codec.write_blocks(obj, cfg["out_dir"], stem, content)
    return {"summary": json.dumps({"manifest": man, "blocks": n, "block_size": obj.block_size}) + "\n"}


def cmd_decode(cfg):
    idx = _as_list(cfg.get("indices"), int)
    content = codec.read_blocks(cfg["manifest"], idx)
    if cfg["out"]:
        with open(cfg["out"], "wb") as fh:
            fh.write(content)
        return {"stdout": json.dumps({"bytes": len(content), "out": cfg["out"]}) + "\n"}
    sys.stdout.flush()
    sys.stdout.buffer.write(content)
    return {}


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "cdf": cmd_cdf,
    "bounds": cmd_bounds,
    "mnk": cmd_mnk,
    "encode": cmd_encode,
    "decode": cmd_decode,
}


def _plot_spec(csv_path, x="k", y="mean", color="dist"):
    return {
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "data": {"url": csv_path},
        "mark": {"type": "line", "point": True},
        "encoding": {
            "x": {"field": x, "type": "quantitative"},
            "y": {"field": y, "type": "quantitative"},
            "color": {"field": color, "type": "nominal"},
        },
    }


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fjsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, sim=True):
        p.add_argument("--config", help="JSON file with default values for any flag")
        p.add_argument("--out", help="output file (default: stdout)")
        if sim:
            p.add_argument("--n", type=int)
            p.add_argument("--k", nargs="+", type=int)
            p.add_argument("--lam", "--lambda", dest="lam", type=float)
            p.add_argument("--mu", type=float)
            p.add_argument("--horizon", type=int, help="jobs per replication")
            p.add_argument("--warmup", type=int, help="jobs discarded at the start of each replication")
            p.add_argument("--reps", type=int, help="independent replications")
            p.add_argument("--seed", type=int)
            p.add_argument("--workers", type=int, help="parallel replication processes")
            p.add_argument("--backend", choices=["cython", "python"])
            p.add_argument("--cancel", choices=simcore.CANCEL_MODES)
            p.add_argument("--check", action="store_true", help="re-run and fail with exit 4 on any mismatch")
            p.add_argument("--plot-spec", dest="plot_spec", help="write a vega-lite spec for the summary CSV")

    p = sub.add_parser("simulate", help="one configuration")
    common(p)
    p.add_argument("--dist", choices=["exponential", "pareto", "deterministic", "correlated_exp"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--mode", choices=simcore.MODES)
    p.add_argument("--ecdf-out", dest="ecdf_out")
    p.add_argument("--trace-out", dest="trace_out", help="per-job CSV of the first replication")

    p = sub.add_parser("sweep", help="mean response time against k, with bounds")
    common(p)
    p.add_argument("--dist", choices=["exponential", "pareto", "deterministic"])
    p.add_argument("--alpha", nargs="+", type=float, help="pareto shapes; inf means deterministic")
    p.add_argument("--delta", nargs="+", type=float, help="correlation weights")
    p.add_argument("--ratio", type=float, help="fix k/n instead of n")
    p.add_argument("--mode", choices=simcore.MODES)

    p = sub.add_parser("cdf", help="response-time ECDFs for several k")
    common(p)
    p.add_argument("--at", nargs="+", type=float, help="report ecdf at these times")
    p.add_argument("--no-single-disk", dest="single_disk", action="store_false", default=None)
    p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("bounds", help="analytic bounds as JSON")
    common(p, sim=False)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--lam", "--lambda", dest="lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--sigma", type=float, help="task std for the distribution-free bound")
    p.add_argument("--cnk", type=float)

    p = sub.add_parser("mnk", help="compare routing policies in the (m, n, k) system")
    common(p)
    p.add_argument("--m", type=int)
    p.add_argument("--policies", nargs="+", choices=["random", "pod", "lwl", "uniform_random", "power_of_d", "least_work_left"])
    p.add_argument("--d", type=int)
    p.add_argument("--metric", choices=list(multigroup.METRICS))

    p = sub.add_parser("encode", help="split a file into n coded blocks")
    common(p, sim=False)
    p.add_argument("input")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--stem")

    p = sub.add_parser("decode", help="rebuild a file from any k blocks")
    common(p, sim=False)
    p.add_argument("manifest")
    p.add_argument("--indices", nargs="+", type=int)
    return ap


def _squash_k(cfg, command):
    # --k takes a list for sweeps; single-config commands want one value
    k = cfg.get("k")
    if command in ("simulate", "mnk") and isinstance(k, list):
        if len(k) != 1:
            raise ConfigError(f"{command} takes a single --k")
        cfg["k"] = k[0]
    return cfg


def _write_outputs(cfg, outputs):
    for name, text in outputs.items():
        if name.startswith("_"):
            continue
        if name == "stdout":
            _emit(text, None)
        elif name == "summary":
            _emit(text, cfg.get("out"))
        elif name == "ecdf":
            _emit(text, cfg["ecdf_out"])
        else:
            os.makedirs(cfg["out_dir"], exist_ok=True)
            _emit(text, os.path.join(cfg["out_dir"], name))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    check = getattr(args, "check", False)
    try:
        cfg = _squash_k(resolve(args), args.command)
        if args.command == "simulate" and cfg.get("trace_out"):
            _write_trace(cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            outputs = COMMANDS[args.command](cfg)
            if check:
                again = COMMANDS[args.command](cfg)
                if {k: v for k, v in again.items() if not k.startswith("_")} != \
                        {k: v for k, v in outputs.items() if not k.startswith("_")}:
                    sys.stderr.write("reproducibility check failed: re-run output differs\n")
                    return EXIT_CHECK
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        sys.stderr.write(f"fjsim {args.command}: {exc}\n")
        return EXIT_CONFIG
    _write_outputs(cfg, outputs)
    if cfg.get("plot_spec") and cfg.get("out"):
        x = "policy" if args.command == "mnk" else "k"
        with open(cfg["plot_spec"], "w") as fh:
            json.dump(_plot_spec(cfg["out"], x=x), fh, indent=2)
    if args.command == "bounds" and not outputs["_stable"]:
        return EXIT_UNSTABLE
    return EXIT_OK


def _write_trace(cfg):
    fj = _single_config(cfg)
    out = simcore.simulate(fj, cfg["horizon"], dists.RngStream(cfg["seed"], 0), backend=cfg["backend"])
    simcore.write_trace(cfg["trace_out"], out, fj.params.k)


if __name__ == "__main__":
    sys.exit(main())
