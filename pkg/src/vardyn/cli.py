"""Command-line pipeline: synth -> calibrate -> extract -> analytics -> validate.

Every subcommand is deterministic given its inputs and the master seed;
artifacts are JSON/CSV (plus an optional binary path dump). Exit codes:
0 success, 1 compute failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

__all__ = ["main", "run"]

_MATURITY_UNITS = {"d": 1 / 365, "w": 7 / 365, "m": 1 / 12, "y": 1.0}


def _parse_maturity(text: str) -> float:
    text = text.strip().lower()
    unit = text[-1]
    if unit not in _MATURITY_UNITS:
        raise argparse.ArgumentTypeError(f"bad maturity {text!r} (use e.g. 3m, 2w, 1y)")
    return float(text[:-1]) * _MATURITY_UNITS[unit]


def _add_io(p, outputs=True):
    if outputs:
        p.add_argument("--out", type=Path, default=Path("out"),
                       help="output directory")
    p.add_argument("--seed", type=int, default=0)


def _load_params(path: Path):
    from .model import ModelParams
    return ModelParams.from_json(Path(path).read_text())


def _load_config(path: Path | None):
    from .calibration import CalibrationConfig
    if path is None:
        return CalibrationConfig()
    doc = json.loads(Path(path).read_text())
    allowed = {f.name for f in dataclasses.fields(CalibrationConfig)}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key in ("k_fast_grid", "k_slow_grid", "theta0"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return CalibrationConfig(**doc)


def _observations(args):
    from .market_data import build_observation_set
    return build_observation_set(args.futures, args.vix)


def cmd_synth(args) -> int:
    from .model import ModelParams
    from .synthetic import SyntheticSpec, default_nonlinear_truth, generate
    params = _load_params(args.params) if args.params else ModelParams.reference_calibration()
    spec = SyntheticSpec(params=params, days=args.days, seed=args.seed,
                         fit=default_nonlinear_truth() if args.coupled else None)
    truth = generate(spec, args.out)
    print(f"wrote {args.days}-day synthetic dataset to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    obs = _observations(args)
    first, last = obs.dates[0], obs.dates[-1]
    counts = [len(o.futures) for o in obs]
    print(f"{len(obs)} days from {first} to {last}; "
          f"futures per day min/max = {min(counts)}/{max(counts)}")
    return 0


def cmd_calibrate(args) -> int:
    from .calibration import calibrate
    obs = _observations(args)
    config = _load_config(args.config)
    if args.seed:
        config = dataclasses.replace(config, seed=args.seed)
    result = calibrate(obs, config)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "params.json").write_text(result.params.to_json())
    with open(args.out / "curves.jsonl", "w") as fh:
        for curve in result.curves:
            fh.write(curve.to_json() + "\n")
    (args.out / "calibration_grid.csv").write_text(result.diagnostics_csv())
    p = result.params
    print(f"converged in {result.outer_iterations} passes; loglik {result.loglik:.2f}")
    print(f"k = {p.k.round(3).tolist()}, theta = {p.theta.round(4).tolist()}, "
          f"rho = {p.rho[0, -1]:.4f}, mu = {p.mu.round(4).tolist()}")
    return 0


def _load_curves(path: Path):
    from .curves import VarianceCurve
    return [VarianceCurve.from_json(line)
            for line in Path(path).read_text().splitlines() if line.strip()]


def cmd_extract(args) -> int:
    from .calibration import extract_factors
    from .market_data import load_spot
    obs = _observations(args)
    curves = _load_curves(args.curves)
    params = _load_params(args.params)
    spot = load_spot(args.spot)
    factors = extract_factors(obs, curves, params, spot)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "factors.csv", "w") as fh:
        cols = ",".join(f"dw_{i}" for i in range(params.n))
        bcols = ",".join(f"dwbar_{i}" for i in range(params.n))
        fh.write(f"date,{cols},dz,dzbar,{bcols}\n")
        for i, d in enumerate(factors.dates):
            dw = ",".join(f"{v:.10f}" for v in factors.dw[i])
            dwb = ",".join(f"{v:.10f}" for v in factors.dwbar[i])
            fh.write(f"{d},{dw},{factors.dz[i]:.10f},{factors.dzbar[i]:.10f},{dwb}\n")
    summary = {"mu_z": factors.mu_z, "sigma_z": factors.sigma_z,
               "zeta_z": factors.zeta_z, "kappa_z": factors.kappa_z,
               "mu_w": factors.mu_w.tolist(), "sigma_w": factors.sigma_w.tolist()}
    (args.out / "factor_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"extracted {len(factors.dates)} daily factor increments")
    return 0


def _read_factors(path: Path):
    rows = Path(path).read_text().splitlines()
    header = rows[0].split(",")
    data = np.array([[float(c) for c in r.split(",")[1:]] for r in rows[1:]])
    names = header[1:]
    return {name: data[:, i] for i, name in enumerate(names)}


def cmd_stats(args) -> int:
    from .statistics import moments, risk_premium_stats
    cols = _read_factors(args.factors)
    summary = json.loads(Path(args.summary).read_text()) if args.summary else None
    args.out.mkdir(parents=True, exist_ok=True)
    lines = ["series,mean,vol,skew,excess_kurtosis,tail_upper,tail_lower"]
    report = {}
    for name, series in cols.items():
        rep = moments(series)
        report[name] = dataclasses.asdict(rep)
        lines.append(f"{name},{rep.mean:.6f},{rep.vol:.6f},"
                     f"{'' if rep.skew is None else f'{rep.skew:.4f}'},"
                     f"{'' if rep.excess_kurtosis is None else f'{rep.excess_kurtosis:.4f}'},"
                     f"{'' if rep.tail_upper is None else f'{rep.tail_upper:.3f}'},"
                     f"{'' if rep.tail_lower is None else f'{rep.tail_lower:.3f}'}")
    if summary:
        report["risk_premium"] = risk_premium_stats(
            summary["sigma_z"], summary["kappa_z"], summary.get("mu_w"))
        report["risk_premium"]["factor_drifts"] = list(
            report["risk_premium"].get("factor_drifts", []))
    (args.out / "stats.json").write_text(json.dumps(report, indent=2, default=float))
    (args.out / "moments.csv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_modes(args) -> int:
    from .statistics import kl_modes, model_modes
    curves = _load_curves(args.curves)
    params = _load_params(args.params)
    grid = np.arange(1, 27) / 52.0
    levels = np.array([c.xi(grid) for c in curves])
    rel = np.diff(levels, axis=0) / levels[:-1]
    data_dec = kl_modes(rel, grid)
    model_dec = model_modes(params, grid)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "modes.csv", "w") as fh:
        fh.write("tenor,data_mode1,data_mode2,model_mode1,model_mode2\n")
        for i, tau in enumerate(grid):
            fh.write(f"{tau:.6f},{data_dec.modes[i, 0]:.6f},{data_dec.modes[i, 1]:.6f},"
                     f"{model_dec.modes[i, 0]:.6f},{model_dec.modes[i, 1]:.6f}\n")
    top2 = data_dec.shares[:2].sum()
    print(f"data top-2 share {top2:.4f}; model top-2 share "
          f"{model_dec.shares[:2].sum():.4f}")
    return 0


def cmd_nonlinear(args) -> int:
    from .spotvol import fit_nonlinear
    cols = _read_factors(args.factors)
    n = sum(1 for k in cols if k.startswith("dwbar_"))
    wbar = np.column_stack([cols[f"dwbar_{i}"] for i in range(n)])
    fit = fit_nonlinear(cols["dzbar"], wbar)
    args.out.mkdir(parents=True, exist_ok=True)
    doc = {"a": fit.a.tolist(), "b": fit.b.tolist(), "gamma": fit.gamma.tolist(),
           "u_corr": fit.u_corr.tolist(), "zeta": fit.zeta, "kappa": fit.kappa,
           "rho_implied": fit.rho_implied().tolist()}
    (args.out / "nonlinear_fit.json").write_text(json.dumps(doc, indent=2))
    print(f"a = {fit.a.round(4).tolist()}, b = {fit.b.round(4).tolist()}, "
          f"gamma = {fit.gamma.round(4).tolist()}")
    return 0


def _load_fit(path: Path):
    from .spotvol import NonlinearFit
    doc = json.loads(Path(path).read_text())
    return NonlinearFit(a=np.asarray(doc["a"]), b=np.asarray(doc["b"]),
                        gamma=np.asarray(doc["gamma"]),
                        u_corr=np.asarray(doc["u_corr"]),
                        zeta=doc["zeta"], kappa=doc["kappa"])


def cmd_garch(args) -> int:
    from .spotvol import garch_map
    fit = _load_fit(args.fit)
    params = _load_params(args.params)
    summary = json.loads(Path(args.summary).read_text())
    out = garch_map(fit, params, curve_slope=args.curve_slope,
                    mu_z=summary["mu_z"], sigma_z=summary["sigma_z"])
    row = out.as_tuple()
    print("phi0,phi1,phi2,phi3,phi4")
    print(",".join(f"{v:.6f}" for v in row))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "garch.json").write_text(json.dumps(dict(zip(
            ["phi0", "phi1", "phi2", "phi3", "phi4"], row)), indent=2))
    return 0


def cmd_vvix(args) -> int:
    from .volofvol import fit_lambda_process, model_vvix, vix_future_total_variance
    params = _load_params(args.params)
    vvix_value = model_vvix(params, 14 / 365)
    args.out.mkdir(parents=True, exist_ok=True)
    taus = np.array([_parse_maturity(m) for m in args.maturities.split(",")])
    rows = ["maturity_years,total_variance,vol"]
    tv = vix_future_total_variance(params, taus)
    for t, v in zip(taus, np.atleast_1d(tv)):
        rows.append(f"{t:.6f},{v:.6f},{np.sqrt(v):.6f}")
    (args.out / "vvix_term_structure.csv").write_text("\n".join(rows) + "\n")
    print(f"model VVIX (two-week first expiry): {vvix_value:.4f}")
    if args.vvix_csv:
        from .market_data import load_vix
        series = load_vix(args.vvix_csv)
        lam = np.array([(v / 100.0) ** 2 / vvix_value**2 for v in series.values()])
        state = fit_lambda_process(lam)
        print(f"lambda fit: lam_inf={state.lam_inf:.3f} k={state.k_lambda:.2f} "
              f"sigma={state.sigma_lambda:.3f} half-life {state.half_life_days:.1f}d")
    return 0


def cmd_analytics(args) -> int:
    from .analytics import (skew_stickiness_ratio, smile_impact,
                            varswap_total_variance)
    from .curves import VarianceCurve
    params = _load_params(args.params)
    fit = _load_fit(args.fit)
    curve = VarianceCurve.flat(args.xi0)
    taus = [_parse_maturity(m) for m in args.maturities.split(",")]
    args.out.mkdir(parents=True, exist_ok=True)
    rows = ["maturity_years,atm_spread,skew,ssr,varswap_sampling,"
            "varswap_implied,varswap_shocks,varswap_total"]
    for t in taus:
        sm = smile_impact(curve, params, fit, t, lambda_scale=args.lambda_scale)
        ssr = skew_stickiness_ratio(params, fit, t)["ratio"]
        vs = varswap_total_variance(params, fit, kappa=fit.kappa,
                                    zeta=fit.zeta, delta_t=t)
        rows.append(f"{t:.6f},{sm.atm_spread:.6f},{sm.skew:.6f},{ssr:.6f},"
                    f"{vs.sampling:.6f},{vs.implied:.6f},{vs.shocks:.6f},"
                    f"{vs.total:.6f}")
    text = "\n".join(rows) + "\n"
    (args.out / "analytics.csv").write_text(text)
    print(text, end="")
    return 0


def cmd_simulate(args) -> int:
    from .curves import VarianceCurve
    from .montecarlo import SimConfig, dump_paths, mc_vix_future, simulate
    params = _load_params(args.params) if args.params else None
    if params is None:
        from .model import ModelParams
        params = ModelParams.reference_calibration()
    curve = VarianceCurve.flat(args.xi0, max_tenor=max(1.0, args.horizon + 0.75))
    cfg = SimConfig(paths=args.paths, horizon=args.horizon, seed=args.seed,
                    lambda_scale=args.lambda_scale,
                    record="full" if args.dump else "final")
    res = simulate(curve, params, cfg)
    price, se = mc_vix_future(res, args.horizon)
    args.out.mkdir(parents=True, exist_ok=True)
    summary = {"paths": args.paths, "horizon": args.horizon, "seed": args.seed,
               "front_future_price": price, "standard_error": se}
    (args.out / "simulation.json").write_text(json.dumps(summary, indent=2))
    if args.dump:
        dump_paths(res, args.out / "paths.bin", np.array([0.0, 0.25, 0.5]))
    print(json.dumps(summary))
    return 0


def cmd_validate(args) -> int:
    from .validate import run_validation
    ok = run_validation(args.data, args.calib, seed=args.seed, quick=not args.deep)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vardyn", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--days", type=int, default=1500)
    p.add_argument("--params", type=Path, default=None)
    p.add_argument("--coupled", action="store_true", default=True)
    _add_io(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="load and summarize a dataset")
    p.add_argument("--futures", type=Path, required=True)
    p.add_argument("--vix", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("calibrate", help="run the three-step calibration")
    p.add_argument("--futures", type=Path, required=True)
    p.add_argument("--vix", type=Path, default=None)
    p.add_argument("--spot", type=Path, default=None)
    p.add_argument("--config", type=Path, default=None)
    _add_io(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("extract", help="extract daily factor increments")
    p.add_argument("--futures", type=Path, required=True)
    p.add_argument("--vix", type=Path, default=None)
    p.add_argument("--spot", type=Path, required=True)
    p.add_argument("--curves", type=Path, required=True)
    p.add_argument("--params", type=Path, required=True)
    _add_io(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("stats", help="moment/tail report of factor series")
    p.add_argument("--factors", type=Path, required=True)
    p.add_argument("--summary", type=Path, default=None)
    _add_io(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("modes", help="empirical vs model curve modes")
    p.add_argument("--curves", type=Path, required=True)
    p.add_argument("--params", type=Path, required=True)
    _add_io(p)
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("nonlinear", help="fit the quadratic spot/vol coupling")
    p.add_argument("--factors", type=Path, required=True)
    _add_io(p)
    p.set_defaults(func=cmd_nonlinear)

    p = sub.add_parser("garch", help="map the model onto GARCH coefficients")
    p.add_argument("--fit", type=Path, required=True)
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--summary", type=Path, required=True)
    p.add_argument("--curve-slope", type=float, default=0.0)
    _add_io(p)
    p.set_defaults(func=cmd_garch)

    p = sub.add_parser("vvix", help="vol-of-vol term structure and lambda fit")
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--vvix-csv", type=Path, default=None)
    p.add_argument("--maturities", type=str, default="2w,1m,2m,3m,6m")
    _add_io(p)
    p.set_defaults(func=cmd_vvix)

    p = sub.add_parser("analytics", help="skew/SSR/variance-swap term report")
    p.add_argument("--params", type=Path, required=True)
    p.add_argument("--fit", type=Path, required=True)
    p.add_argument("--maturities", type=str, default="1m,3m,6m")
    p.add_argument("--xi0", type=float, default=0.04)
    p.add_argument("--lambda-scale", type=float, default=1.0)
    _add_io(p)
    p.set_defaults(func=cmd_analytics)

    p = sub.add_parser("simulate", help="Monte Carlo ensemble summary")
    p.add_argument("--params", type=Path, default=None)
    p.add_argument("--paths", type=int, default=20_000)
    p.add_argument("--horizon", type=float, default=1 / 12)
    p.add_argument("--xi0", type=float, default=0.04)
    p.add_argument("--lambda-scale", type=float, default=1.0)
    p.add_argument("--dump", action="store_true")
    _add_io(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="run the oracle suite, print pass table")
    p.add_argument("--data", type=Path, default=None,
                   help="synthetic dataset directory (with truth.json)")
    p.add_argument("--calib", type=Path, default=None,
                   help="calibration output directory (params.json)")
    p.add_argument("--deep", action="store_true",
                   help="run the heavier Monte Carlo checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)
    return ap


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:    # argparse uses 2 for usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing input file: {exc.filename or exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:     # compute failure
        print(f"compute failure: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
