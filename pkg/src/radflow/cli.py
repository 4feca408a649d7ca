"""Command-line entry point: ``radflow {modes,toy,simulate,limits,converge,report}``.

Exit codes: 0 success, 1 validation error, 2 numerical failure. Errors go to
stderr as one JSON object; stdout lists written data files, one per line.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import KINDS, RunConfig, parse_config
from .errors import DegenerateSplit, MissingArtifacts, NumericalFailure, ValidationError
from .harness import ExperimentPlan, InitialData, pj1_decay_error, run_experiment
from .limit_systems import LimitKind, constraint_residual, simulate_limit
from .linear_modes import (Approach, assemble_mode_matrix, band_of, decay_envelope, effective_viscosity,
                           eigen_spectrum)
from .params import EpsilonFamily, RegimeLabel, is_stable, stability_margin
from .spectral_solver import diagnostics, random_state, save_trajectory, simulate
from .toy_ode import (Toy2x2, ToyCoefficients, build_class_E, det_I_plus_rhoP, tilde_nu, transformed_system,
                      max_decay_ratio_2x2)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"usage: {message}")


# ---------------------------------------------------------------------------
# helpers


def _write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(header)
        w.writerows([[_cell(x) for x in r] for r in rows])
    return path


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else repr(float(x))
    return x


def _write_json(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def regime_for(cfg: RunConfig) -> RegimeLabel:
    kind = cfg["experiment.kind"]
    if kind == "noneq":
        return RegimeLabel.noneq(cfg["experiment.kappa"], cfg["experiment.m"])
    if kind == "degen":
        return RegimeLabel.degenerate(cfg["experiment.kappa"])
    if kind == "poisson":
        return RegimeLabel.poisson(cfg["experiment.m"], cfg["experiment.ell"])
    return RegimeLabel.equilibrium()


def family_for(cfg: RunConfig) -> EpsilonFamily:
    eps = cfg["experiment.eps_ladder"]
    kind, power = cfg["experiment.kind"], cfg["experiment.power"]
    mu, lam, dim = cfg["params.mu"], cfg["params.lam"], cfg["params.dim"]
    if kind == "noneq":
        return EpsilonFamily.nonequilibrium(eps, cfg["experiment.kappa"], cfg["experiment.m"], mu, lam, dim)
    if kind == "degen":
        return EpsilonFamily.degenerate(eps, cfg["experiment.kappa"], mu, lam, dim, power=power)
    if kind == "poisson":
        if not 0 < power < 1:
            raise ValidationError("experiment.power must lie in (0, 1) for a Poisson family")
        return EpsilonFamily.poisson(eps, cfg["experiment.m"], mu, lam, dim, power=power)
    ell_s = cfg["params.ell_s"]
    return EpsilonFamily.from_laws(eps, lambda e: e ** (-power), lambda e, l: ell_s, mu, lam, dim)


# ---------------------------------------------------------------------------
# subcommands


def cmd_modes(cfg: RunConfig) -> list[Path]:
    p = cfg.physical_params()
    out = cfg.out_dir
    rhos = np.geomspace(cfg["experiment.rho_min"], cfg["experiment.rho_max"], cfg["experiment.rho_count"])
    rows = []
    for rho in rhos:
        spec = eigen_spectrum(assemble_mode_matrix(float(rho), p))
        env = decay_envelope(p, float(rho))
        ev = spec.eigenvalues
        rows.append([float(rho), *ev.real, *ev.imag, band_of(float(rho), p).band.value, str(spec.stable).lower(),
                     env.predicted_fluid_rate, env.predicted_rad_rate_j0, env.predicted_rad_rate_j1,
                     env.measured_fluid_rate, env.measured_rad_rate_j0, env.measured_rad_rate_j1])
    header = (["rho"] + [f"re_lambda_{i}" for i in range(1, 5)] + [f"im_lambda_{i}" for i in range(1, 5)]
              + ["band", "stable", "predicted_fluid_rate", "predicted_rad_rate_j0", "predicted_rad_rate_j1",
                 "measured_fluid_rate", "measured_rad_rate_j0", "measured_rad_rate_j1"])
    min_real = min(min(r[1:5]) for r in rows)
    summary = {"params": _params(p), "stability_margin": stability_margin(p), "stable": is_stable(p),
               "min_real_part": min_real, "effective_viscosity": effective_viscosity(p),
               "rho_range": [float(rhos[0]), float(rhos[-1])]}
    return [_write_csv(out / "modes.csv", header, rows), _write_json(out / "modes.json", summary)]


def _class_checks(c: ToyCoefficients, rhos=(0.01, 0.05, 0.1)) -> dict:
    """Worst commutator, determinant and similarity residuals over both approaches."""
    out = {"commutator_residual": 0.0, "det_residual": 0.0, "similarity_error": 0.0, "skipped": []}
    for approach in Approach:
        try:
            sys_e = build_class_E(c, approach)
        except DegenerateSplit as exc:
            out["skipped"].append(f"{approach.value}: {exc}")
            continue
        out["commutator_residual"] = max(out["commutator_residual"], sys_e.commutator_residual())
        for rho in rhos:
            dense = float(np.linalg.det(np.eye(4) + rho * sys_e.P))
            gap = abs(det_I_plus_rhoP(rho, c, approach) - dense) / max(1.0, abs(dense))
            out["det_residual"] = max(out["det_residual"], gap)
            try:
                sim = transformed_system(rho, sys_e).similarity_error
            except NumericalFailure:
                continue
            out["similarity_error"] = max(out["similarity_error"], sim)
    return out


def cmd_toy(cfg: RunConfig) -> list[Path]:
    p = cfg.physical_params()
    out = cfg.out_dir
    rng = np.random.default_rng(cfg["experiment.seed"])
    sources = [("params", ToyCoefficients.from_params(p))]
    sources += [(f"draw_{i:03d}", ToyCoefficients.random(rng)) for i in range(cfg["experiment.toy_draws"])]
    records = []
    for name, c in sources:
        a, c2, b = np.exp(rng.uniform(np.log(0.2), np.log(5.0), 3))
        d = b + float(np.exp(rng.uniform(np.log(0.2), np.log(5.0))))
        toy = Toy2x2(float(a), float(b), float(c2), d)
        rho = 0.9 * min(1.0, toy.rho_bound())
        ratio = max_decay_ratio_2x2(toy, rho, 100 / ((d - b) * rho * rho), 1000)
        rec = {"draw": name, "coeffs": {k: getattr(c, k) for k in ("alpha", "beta", "gamma", "sigma", "eta")},
               "tilde_nu": tilde_nu(c), **_class_checks(c),
               "toy2x2": {"a": toy.a, "b": toy.b, "c": toy.c, "d": toy.d, "rho": rho}, "max_ratio_ODE5": ratio}
        records.append(rec)
    jsonl = out / "toy.jsonl"
    out.mkdir(parents=True, exist_ok=True)
    jsonl.write_text("".join(json.dumps(r, sort_keys=True, default=_jsonable) + "\n" for r in records),
                     encoding="utf-8")
    summary = {key: max(r[key] for r in records)
               for key in ("commutator_residual", "det_residual", "similarity_error", "max_ratio_ODE5")}
    summary["draws"] = len(records)
    summary["skipped"] = [f"{r['draw']}/{s}" for r in records for s in r["skipped"]]
    return [jsonl, _write_json(out / "toy.json", summary)]


DIAG_COLUMNS = ("t", "l2_b", "l2_u", "l2_j0", "l2_j1", "l2_frak_j0", "l2_frak_j1", "l2_Pj1", "x_norm")


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    p = cfg.physical_params()
    grid, scfg, fns = cfg.grid(), cfg.solver(), cfg.coupling()
    start = random_state(grid, cfg["experiment.seed"], cfg["experiment.amplitude"], cfg["experiment.k_cut"])
    traj = simulate(start, scfg, p, fns)
    regime = regime_for(cfg)
    out = cfg.out_dir
    d = save_trajectory(traj, out / "trajectory")
    rows = []
    for s in traj.snapshots:
        rec = diagnostics(s, p, regime)
        rows.append([rec.get(c, math.nan) for c in DIAG_COLUMNS])
    summary = {"params": _params(p), "regime": regime.kind.value, "t_end": float(traj.times[-1]),
               "snapshots": len(traj.times), "pj1_decay_error": pj1_decay_error(traj, p),
               "max_x_norm": max(r[-1] for r in rows), "initial_x_norm": rows[0][-1]}
    return [d / "meta.json", _write_csv(out / "diagnostics.csv", DIAG_COLUMNS, rows),
            _write_json(out / "simulate.json", summary)]


def cmd_limits(cfg: RunConfig) -> list[Path]:
    p = cfg.physical_params()
    kind = LimitKind.from_regime(regime_for(cfg))
    grid, scfg, fns = cfg.grid(), cfg.solver(), cfg.coupling()
    start = random_state(grid, cfg["experiment.seed"], cfg["experiment.amplitude"], cfg["experiment.k_cut"])
    traj = simulate_limit(start, kind, scfg, p, fns)
    out = cfg.out_dir
    name = f"limit_{cfg['experiment.kind']}"
    d = save_trajectory(traj, out / name)
    rows = []
    for s in traj.snapshots:
        j0 = grid.l2(s.j0_hat) if s.j0_hat is not None else math.nan
        res = constraint_residual(s, p, kind) if kind.family.value == "poisson" else math.nan
        rows.append([s.t, grid.l2(s.b_hat), grid.l2(s.u_hat), j0, res])
    return [d / "meta.json",
            _write_csv(out / f"{name}.csv", ["t", "l2_b", "l2_u", "l2_j0", "constraint_residual"], rows)]


def cmd_converge(cfg: RunConfig) -> list[Path]:
    fam = family_for(cfg)
    plan = ExperimentPlan(fam, regime_for(cfg),
                          InitialData(cfg["experiment.seed"], cfg["experiment.amplitude"], cfg["experiment.k_cut"]),
                          cfg.grid(), cfg.solver(), cfg.coupling(), cfg["experiment.workers"])
    out = cfg.out_dir
    _, report = run_experiment(plan, out)
    paths = [out / "convergence.csv", out / "convergence.json"]
    if report.partial:
        for p in paths:
            print(p)
        raise NumericalFailure("partial family run: " + "; ".join(f"{k}: {v}" for k, v in report.failures.items()))
    return paths


def _params(p) -> dict:
    return {"eps": p.eps, "ell": p.ell, "ell_s": p.ell_s, "mu": p.mu, "lam": p.lam, "dim": p.dim}


# ---------------------------------------------------------------------------
# report

ARTIFACT_GROUPS = {
    "modes": ("modes.csv", "modes.json"),
    "toy": ("toy.jsonl", "toy.json"),
    "simulate": ("trajectory/meta.json", "diagnostics.csv", "simulate.json"),
    "converge": ("convergence.csv", "convergence.json"),
}


def _read_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


def report(run_dir) -> list[Path]:
    """Summarize a run directory and emit per-figure CSVs under ``run_dir/report``."""
    d = Path(run_dir)
    present, missing = [], []
    for group, files in ARTIFACT_GROUPS.items():
        have = [f for f in files if (d / f).exists()]
        if have:
            present.append(group)
            missing += [str(d / f) for f in files if f not in have]
    limits = sorted(d.glob("limit_*.csv"))
    if missing:
        raise MissingArtifacts(missing)
    if not present and not limits:
        raise MissingArtifacts([str(d / f) for files in ARTIFACT_GROUPS.values() for f in files])
    out = d / "report"
    written, lines = [], [f"run directory: {d.name}"]
    if "modes" in present:
        header, rows = _read_csv(d / "modes.csv")
        idx = {h: i for i, h in enumerate(header)}
        eig_cols = ["rho"] + [f"re_lambda_{i}" for i in range(1, 5)] + [f"im_lambda_{i}" for i in range(1, 5)]
        env_cols = ["rho", "band"] + [f"{kind}_{what}" for what in ("fluid_rate", "rad_rate_j0", "rad_rate_j1")
                                      for kind in ("predicted", "measured")]
        written.append(_write_csv(out / "eigenvalue_curves.csv", eig_cols, [[r[idx[c]] for c in eig_cols] for r in rows]))
        written.append(_write_csv(out / "decay_envelopes.csv", env_cols, [[r[idx[c]] for c in env_cols] for r in rows]))
        s = json.loads((d / "modes.json").read_text())
        lines.append(f"modes: stability margin {s['stability_margin']:.6g} ({'stable' if s['stable'] else 'unstable'}), "
                     f"min Re lambda {s['min_real_part']:.6g}")
    if "toy" in present:
        s = json.loads((d / "toy.json").read_text())
        lines.append(f"toy: {s['draws']} draws, max commutator residual {s['commutator_residual']:.3e}, "
                     f"max det residual {s['det_residual']:.3e}, max similarity error {s['similarity_error']:.3e}, "
                     f"max 2x2 decay ratio {s['max_ratio_ODE5']:.9f}")
    if "simulate" in present:
        s = json.loads((d / "simulate.json").read_text())
        lines.append(f"simulate: t_end {s['t_end']:.6g}, P j1 decay error {s['pj1_decay_error']:.3e}, "
                     f"x-norm {s['initial_x_norm']:.6g} -> max {s['max_x_norm']:.6g}")
    if "converge" in present:
        s = json.loads((d / "convergence.json").read_text())
        rows = [[q, _cell(v.get("slope") if v.get("slope") is not None else math.nan),
                 _cell(v.get("residual") if v.get("residual") is not None else math.nan)]
                for q, v in sorted(s["slopes"].items())]
        written.append(_write_csv(out / "convergence_slopes.csv", ["quantity", "slope", "residual"], rows))
        j1 = s["slopes"].get("j1_norm_vs_scale", {}).get("slope")
        ratios = ", ".join("nan" if r is None else f"{r:.4g}" for r in s["j1_scale_ratio"])
        lines.append(f"converge ({s['regime']}): fitted j1 slope vs predicted scale "
                     f"{'n/a' if j1 is None else format(j1, '.4f')}; j1 scale ratio [{ratios}]"
                     + (" (partial)" if s["partial"] else ""))
        for q, v in sorted(s["slopes"].items()):
            if v.get("slope") is not None:
                lines.append(f"  slope {q}: {v['slope']:.4f} (residual {v['residual']:.2e})")
    for path in limits:
        header, rows = _read_csv(path)
        lines.append(f"{path.stem}: {len(rows)} snapshots, final l2_b {float(rows[-1][1]):.6g}")
    summary = out / "summary.txt"
    out.mkdir(parents=True, exist_ok=True)
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [summary] + written


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat 'section.key = value' config file")
    common.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides experiment.seed)")
    common.add_argument("--kind", choices=KINDS, help="limit regime (overrides experiment.kind)")
    common.add_argument("--eps-ladder", help="comma-separated decreasing eps values")
    parser = _Parser(prog="radflow", description="Radiative flow laboratory")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [("modes", "per-frequency eigenvalues and decay envelopes"),
                       ("toy", "model ODE identities and 2x2 Lyapunov decay"),
                       ("simulate", "full nonlinear system on the torus"),
                       ("limits", "one limit system on the torus"),
                       ("converge", "eps-family convergence study"),
                       ("report", "summarize a run directory")]:
        sp = sub.add_parser(name, parents=[common], help=text)
        if name == "report":
            sp.add_argument("run_dir", nargs="?", type=Path, help="directory to summarize (default: --out)")
    return parser


def _load(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    ladder = None
    if args.eps_ladder:
        try:
            ladder = tuple(float(x) for x in args.eps_ladder.split(",") if x.strip())
        except ValueError:
            raise ValidationError(f"--eps-ladder: cannot parse {args.eps_ladder!r}") from None
    return cfg.with_overrides(output__dir=None if args.out is None else str(args.out),
                              experiment__seed=args.seed, experiment__kind=args.kind,
                              experiment__eps_ladder=ladder)


COMMANDS = {"modes": cmd_modes, "toy": cmd_toy, "simulate": cmd_simulate, "limits": cmd_limits,
            "converge": cmd_converge}


def _error_record(exc: Exception, code: int) -> dict:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("key", "line", "missing", "field", "worst_time", "violation"):
        if hasattr(exc, attr):
            rec[attr] = getattr(exc, attr)
    return rec


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _load(args)
        if args.command == "report":
            paths = report(args.run_dir if args.run_dir is not None else cfg.out_dir)
        else:
            paths = COMMANDS[args.command](cfg)
    except ValidationError as exc:
        return _fail(exc, 1)
    except (NumericalFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(exc, 2)
    for p in paths:
        print(p)
    return 0


def _fail(exc: Exception, code: int) -> int:
    print(json.dumps(_error_record(exc, code), default=str), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
