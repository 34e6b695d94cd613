"""Command-line interface and experiment orchestration.

Subcommands: ``forward``, ``recover``, ``distance``, ``certificate``,
``tcheck``, ``pipeline``, ``sweep``.  Pipelines synthesize observations,
recover, score in the generalized Wasserstein metric, and optionally build
certificates to evaluate the error-bound constants.  All artifacts are CSV
or JSON; reports are byte-reproducible for a fixed scenario and seed.

Exit codes: 0 success, 2 invalid configuration, 3 solver not converged,
4 certificate verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import certificates as certs
from . import chebyshev, imaging, measures, solver, transport

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_CERT_FAILURE = 4


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    """One end-to-end experiment: window, ground truth, noise, solver grid,
    feasibility-radius rule, and optional certificate evaluation."""

    window: imaging.Window
    truth: measures.AtomicMeasure
    delta: float = 0.0
    noise_seed: int = 0
    grid_n: int = 256
    deltap_rule: str = "additive"      # additive | multiplicative | explicit
    deltap_value: float | None = None  # for the explicit rule
    eps: float = 0.1                   # separation scale for R and certificates
    sparse_k: int | None = None        # K for the sparse approximation
    certificates: bool = False
    mass_floor: float = 1e-6
    ground_norm: str = "l2"
    name: str = "scenario"

    @classmethod
    def from_json_dict(cls, d, base_dir="."):
        base = Path(base_dir)
        try:
            wspec = d["window"]
            window = (
                imaging.Window.load(base / wspec)
                if isinstance(wspec, str)
                else imaging.Window.from_json_dict(wspec)
            )
            tspec = d["truth"]
            if isinstance(tspec, str):
                truth = measures.AtomicMeasure.load(base / tspec)
            elif "atoms" in tspec:
                truth = measures.AtomicMeasure.from_json_dict(tspec)
            else:
                gen = tspec["generator"]
                rng = np.random.default_rng(int(gen["seed"]))
                truth = measures.random_separated_measure(
                    int(gen["K"]),
                    float(gen.get("sep_floor", 0.25)),
                    tuple(gen.get("weight_range", (0.5, 1.5))),
                    rng,
                )
            dp = d.get("deltap", {"rule": "additive"})
            return cls(
                window=window,
                truth=truth,
                delta=float(d.get("delta", 0.0)),
                noise_seed=int(d.get("noise_seed", 0)),
                grid_n=int(d.get("grid_n", 256)),
                deltap_rule=dp.get("rule", "additive"),
                deltap_value=dp.get("value"),
                eps=float(d.get("eps", 0.1)),
                sparse_k=d.get("K"),
                certificates=bool(d.get("certificates", False)),
                mass_floor=float(d.get("mass_floor", 1e-6)),
                ground_norm=d.get("ground_norm", "l2"),
                name=d.get("name", "scenario"),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"invalid scenario: {err}") from err

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh), base_dir=path.parent)


def run_pipeline(sc: Scenario, out_dir=None):
    """Synthesize -> observe -> recover -> score; returns the report dict.

    When ``sc.certificates`` is set, robust and signed certificates are built
    for the sparse approximation's support and the error-bound constants and
    inequalities are evaluated and included in the report.
    """
    w = sc.window
    truth = sc.truth
    y_clean = imaging.forward(w, truth)
    obs = imaging.add_noise(y_clean, sc.delta, sc.noise_seed)

    K = sc.sparse_k if sc.sparse_k is not None else max(truth.n_atoms, 1)
    if truth.n_atoms:
        approx = measures.approximate_sparse(
            truth, K, sc.eps, ground_norm=sc.ground_norm
        )
        sparse_m, residual_R = approx.measure, approx.residual
        sep_val = measures.sep(truth)
    else:
        sparse_m, residual_R = measures.AtomicMeasure.empty(), 0.0
        sep_val = None

    L = imaging.lipschitz_constant(w)
    if sc.deltap_rule == "explicit":
        if sc.deltap_value is None:
            raise ConfigError("explicit deltap rule needs a value")
        deltap = float(sc.deltap_value)
    else:
        deltap = solver.choose_deltap(sc.delta, L, residual_R, rule=sc.deltap_rule)

    grid = solver.Grid(sc.grid_n)
    rec = solver.recover(w, obs, grid, max(deltap, obs.delta), mass_floor=sc.mass_floor)
    d_gw, plan = transport.gen_wasserstein(
        truth, rec.extracted, ground_norm=sc.ground_norm
    )

    report = {
        "name": sc.name,
        "delta": sc.delta,
        "deltap": deltap,
        "deltap_rule": sc.deltap_rule,
        "grid_n": sc.grid_n,
        "eps": sc.eps,
        "noise_seed": sc.noise_seed,
        "sep": sep_val,
        "R": residual_R,
        "residual": rec.residual,
        "converged": rec.converged,
        "iterations": rec.iterations,
        "d_gw": d_gw,
        "extracted_atoms": rec.extracted.n_atoms,
        "truth_tv": truth.tv(),
        "extracted_tv": rec.extracted.tv(),
        "lipschitz": L,
        "ground_norm": sc.ground_norm,
    }

    if sc.certificates and sparse_m.n_atoms:
        cert = certs.assemble_robust(w, sparse_m, sc.eps)
        h_in = measures.box_masses(rec.extracted, sparse_m.points, sc.eps)
        signs = tuple(
            1 if v > 0 else -1 for v in (h_in - sparse_m.weights)
        )
        cert0 = certs.assemble_signed(w, sparse_m, sc.eps, signs)
        consts = certs.error_constants(cert, cert0, L, sparse_m.tv())
        # the inequalities hold at the radius the extracted atoms satisfy,
        # which exceeds the solver's gridded residual by the extraction error
        deltap_eff = max(
            deltap,
            float(np.linalg.norm(obs.y - imaging.forward(w, rec.extracted))),
        )
        bounds = certs.error_bounds_check(
            rec.extracted, sparse_m, cert, cert0, deltap_eff
        )
        theorem_rhs = consts.rhs(sc.delta, sc.eps, residual_R)
        report.update(
            {
                "c1": consts.c1,
                "c2": consts.c2,
                "c3": consts.c3,
                "c1_k_dependent": consts.k_dependent_c1,
                "c3_k_dependent": consts.k_dependent_c3,
                "floor_coefficient": consts.floor_coefficient,
                "theorem_rhs": theorem_rhs,
                "bound_satisfied": bool(d_gw <= theorem_rhs),
                "cert_frob": cert.frob(),
                "cert0_frob": cert0.frob(),
                "cert0_signs": list(signs),
                "deltap_effective": deltap_eff,
                "far_mass": bounds.far_mass,
                "far_bound": bounds.far_bound,
                "near_sum": bounds.near_sum,
                "near_bound": bounds.near_bound,
                "bounds_ok": bounds.ok,
            }
        )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        obs.save(out / "y.csv")
        rec.extracted.save(out / "xhat.json")
        _write_report(out / "report.json", report)
    return report


def _write_report(path, report):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_sweep(base: Scenario, axis, values, seeds=(0,), out_dir=None, jobs=1):
    """One pipeline per (value, seed); aggregates a CSV-style table.

    ``axis`` is one of delta | epsilon | M | sep.  Per-row failures are
    recorded and the sweep continues.  Returns (rows, aggregate) where rows
    hold the per-run reports and aggregate one summary entry per value.
    """
    if not values:
        raise ConfigError("sweep needs at least one value")
    tasks = []
    for v in values:
        for seed in seeds:
            tasks.append((v, seed))
    args = [(base, axis, v, seed) for v, seed in tasks]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, args))
    else:
        rows = [_sweep_row(a) for a in args]
    aggregate = []
    for v in values:
        sel = [r for r in rows if r["value"] == v and "error" not in r]
        if sel:
            dg = np.array([r["d_gw"] for r in sel])
            aggregate.append(
                {
                    "value": v,
                    "d_gw_mean": float(dg.mean()),
                    "d_gw_max": float(dg.max()),
                    "residual_mean": float(np.mean([r["residual"] for r in sel])),
                    "theorem_rhs_mean": (
                        float(np.mean([r["theorem_rhs"] for r in sel]))
                        if all("theorem_rhs" in r for r in sel)
                        else None
                    ),
                    "n": len(sel),
                }
            )
        else:
            aggregate.append({"value": v, "d_gw_mean": None, "n": 0})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_sweep_csv(out / "sweep.csv", aggregate)
        _write_report(out / "sweep_rows.json", {"rows": rows})
    return rows, aggregate


def _sweep_row(packed):
    base, axis, v, seed = packed
    try:
        sc = _scenario_variant(base, axis, v, seed)
        rep = run_pipeline(sc)
        rep["value"] = v
        rep["seed"] = seed
        return rep
    except Exception as err:  # per-row failures recorded, sweep continues
        return {"value": v, "seed": seed, "error": str(err)}


def _scenario_variant(base: Scenario, axis, v, seed):
    from copy import deepcopy

    sc = deepcopy(base)
    sc.noise_seed = seed
    if axis == "delta":
        sc.delta = float(v)
    elif axis == "epsilon":
        sc.eps = float(v)
    elif axis == "M":
        w = base.window
        if w.kind != "gaussian":
            raise ConfigError("M sweeps need a gaussian window")
        sc.window = imaging.Window.gaussian(np.linspace(0, 1, int(v)), w.sigma)
    elif axis == "sep":
        rng = np.random.default_rng(seed)
        sc.truth = measures.random_separated_measure(
            max(base.truth.n_atoms, 1), float(v), (0.5, 1.5), rng
        )
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    return sc


def _write_sweep_csv(path, aggregate):
    cols = ["value", "d_gw_mean", "d_gw_max", "residual_mean", "theorem_rhs_mean", "n"]
    lines = [",".join(cols)]
    for row in aggregate:
        lines.append(
            ",".join(
                "" if row.get(c) is None else repr(row.get(c)) for c in cols
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


# -- argument parsing --------------------------------------------------------


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="parallel sweep rows")
    p = argparse.ArgumentParser(
        prog="nnsr",
        description="Grid-free positive image super-resolution toolkit",
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=argparse.ArgumentParser)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    f = add("forward", help="apply the imaging operator to a measure")
    f.add_argument("--window", required=True)
    f.add_argument("--measure", required=True)
    f.add_argument("--delta", type=float, default=0.0)
    f.add_argument("--out-y", required=True)

    r = add("recover", help="solve the feasibility program")
    r.add_argument("--window", required=True)
    r.add_argument("--obs", required=True, help="observation CSV (JSON sidecar)")
    r.add_argument("--grid-n", type=int, default=256)
    r.add_argument("--deltap", type=float, required=True)
    r.add_argument("--mass-floor", type=float, default=1e-6)
    r.add_argument(
        "--out-xhat",
        dest="out_xhat",
        default=None,
        help="estimate JSON path (defaults to --out)",
    )

    d = add("distance", help="generalized Wasserstein distance")
    d.add_argument("--x1", required=True)
    d.add_argument("--x2", required=True)
    d.add_argument("--ground-norm", default="l2", choices=["l2", "l1", "linf"])

    c = add("certificate", help="build and verify a dual certificate")
    c.add_argument("--window", required=True)
    c.add_argument("--measure", required=True, help="support measure JSON")
    c.add_argument("--kind", choices=["exact", "robust", "signed"], default="robust")
    c.add_argument("--eps", type=float, default=0.1)
    c.add_argument("--signs", default=None, help="e.g. '+-' for the signed kind")
    c.add_argument("--heatmap-n", type=int, default=512)
    c.add_argument("--out-dir", required=True)

    t = add("tcheck", help="T-system / T*-system checks")
    t.add_argument("--window", required=True)
    t.add_argument("--mode", choices=["tsystem", "tstar"], default="tsystem")
    t.add_argument("--trials", type=int, default=1000)
    t.add_argument("--pattern", default=None, help="JSON file for tstar mode")

    pl = add("pipeline", help="run one end-to-end scenario")
    pl.add_argument("--config", required=True)

    sw = add("sweep", help="run a scenario sweep along one axis")
    sw.add_argument("--config", required=True)
    sw.add_argument("--axis", required=True, choices=["delta", "epsilon", "M", "sep"])
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--seeds", default="0", help="comma-separated seeds")
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except certs.CertificateError as err:
        print(f"certificate failure: {err}", file=sys.stderr)
        return EXIT_CERT_FAILURE
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_CONFIG


def _dispatch(args):
    cmd = args.command
    if cmd == "forward":
        w = imaging.Window.load(args.window)
        x = measures.AtomicMeasure.load(args.measure)
        y = imaging.forward(w, x)
        obs = imaging.add_noise(y, args.delta, args.seed)
        obs.save(args.out_y)
        return EXIT_OK

    if cmd == "recover":
        w = imaging.Window.load(args.window)
        obs = imaging.ImageObservation.load(args.obs)
        grid = solver.Grid(args.grid_n)
        rec = solver.recover(
            w, obs, grid, max(args.deltap, obs.delta), mass_floor=args.mass_floor
        )
        out_path = args.out_xhat if args.out_xhat is not None else args.out
        if out_path is None:
            raise ConfigError("recover needs --out-xhat (or --out) for the estimate")
        rec.extracted.save(out_path)
        print(
            json.dumps(
                {
                    "residual": rec.residual,
                    "converged": rec.converged,
                    "iterations": rec.iterations,
                    "n_atoms": rec.extracted.n_atoms,
                },
                sort_keys=True,
            )
        )
        return EXIT_OK if rec.converged else EXIT_NOT_CONVERGED

    if cmd == "distance":
        x1 = measures.AtomicMeasure.load(args.x1)
        x2 = measures.AtomicMeasure.load(args.x2)
        dist, plan = transport.gen_wasserstein(x1, x2, ground_norm=args.ground_norm)
        print(
            json.dumps(
                {
                    "d_gw": dist,
                    "transported_mass": plan.mass(),
                    "destroyed": float(plan.destroyed.sum()),
                    "created": float(plan.created.sum()),
                },
                sort_keys=True,
            )
        )
        return EXIT_OK

    if cmd == "certificate":
        w = imaging.Window.load(args.window)
        x = measures.AtomicMeasure.load(args.measure)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.kind == "exact":
            cert = certs.assemble_exact(w, x)
        elif args.kind == "robust":
            cert = certs.assemble_robust(w, x, args.eps)
        else:
            if args.signs is None:
                raise ConfigError("signed certificates need --signs like '+-'")
            signs = tuple(1 if ch == "+" else -1 for ch in args.signs)
            cert = certs.assemble_signed(w, x, args.eps, signs)
        cert.save_coeffs(out / "b.csv")
        _write_report(out / "report.json", {"kind": cert.kind, **cert.report})
        grid = np.linspace(0.0, 1.0, args.heatmap_n)
        np.savetxt(out / "q_grid.csv", cert.eval_grid(grid, grid), delimiter=",")
        return EXIT_OK

    if cmd == "tcheck":
        w = imaging.Window.load(args.window)
        if args.mode == "tsystem":
            rep = chebyshev.check_tsystem(w, trials=args.trials, seed=args.seed)
        else:
            if args.pattern is None:
                raise ConfigError("tstar mode needs --pattern")
            with open(args.pattern) as fh:
                pat = json.load(fh)
            seq = chebyshev.make_admissible(
                [(p, m) for p, m in pat["limits"]],
                pat["singleton"],
                w.M,
                pat.get("h0", 1e-3),
            )
            target = certs.PlateauTarget.off_support(
                np.asarray(pat["centers"], dtype=float), float(pat["eps"])
            )
            rep = chebyshev.check_tstar(
                target, w, seq, n_values=pat.get("n_values", (64, 128, 256, 512))
            )
        print(json.dumps(rep, indent=2, sort_keys=True))
        return EXIT_OK if rep["passed"] else 1

    if cmd == "pipeline":
        sc = Scenario.load(args.config)
        report = run_pipeline(sc, out_dir=args.out)
        print(json.dumps(report, indent=2, sort_keys=True))
        if not report["converged"]:
            return EXIT_NOT_CONVERGED
        return EXIT_OK

    if cmd == "sweep":
        sc = Scenario.load(args.config)
        values = [float(v) for v in args.values.split(",")]
        seeds = [int(s) for s in args.seeds.split(",")]
        if args.axis == "M":
            values = [int(v) for v in values]
        rows, aggregate = run_sweep(
            sc, args.axis, values, seeds=seeds, out_dir=args.out, jobs=args.jobs
        )
        print(json.dumps(aggregate, indent=2, sort_keys=True))
        return EXIT_OK

    raise ConfigError(f"unknown command {cmd!r}")


if __name__ == "__main__":
    sys.exit(main())
