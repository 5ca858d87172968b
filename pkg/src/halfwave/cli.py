"""Command-line pipeline: ground-state -> profile -> modulation / evolve -> diagnostics -> report.

Each subcommand writes into its own directory under --out: the resolved
config (config.json), its artifacts and a report.json listing every check.
Errors are printed to stderr as one JSON object and mapped to exit codes.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import spectral as sp
from .artifacts import load_ground_state, load_profile_set, save_ground_state, save_profile_set
from .errors import (ConfigurationError, DiagnosticsError, EvolutionError, FormatError,
                     HalfwaveError, MissingArtifactError, ModulationError)
from .evolution import EvolutionConfig, evolve, summary
from .ground_state import pohozaev_report, solve_ground_state
from .modulation import (ModulationState, closed_form, fit_blowup_laws, integrate,
                         write_trajectory_csv)
from .profile import ModParams, build_profile_set, energy_momentum_expansion, scaling_report
from .snapshot import read_json, write_json

CONFIG_SCHEMA = 1
# exit status when a stage runs but one of its checks fails
CHECK_FAILURE_CODE = {"evolve": 5, "modulation": 6, "diagnostics": 7}


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# defaults per subcommand; the type of each default fixes the parser of its key
DEFAULTS = {
    "ground-state": {"grid_n": 4096, "grid_rmax": 200.0, "seed": 0, "tol": 1e-10,
                     "max_iter": 2000, "virial_tol": 1e-6},
    "profile": {"grid_n": 4096, "grid_rmax": 200.0, "seed": 0,
                "b_values": (0.2, 0.1, 0.05, 0.025), "beta_values": (0.2, 0.1, 0.05)},
    "modulation": {"grid_n": 4096, "grid_rmax": 200.0, "seed": 0, "b0": 0.1, "beta0": 0.0,
                   "lam0": 1.0, "gamma0": 0.0, "ds": 0.01, "s_span": 60.0, "fit_tail": 2000},
    "evolve": {"grid_n": 4096, "grid_rmax": 200.0, "seed": 0, "dt": 0.005, "t_end": 8.0,
               "b0": 0.1, "lam0": 1.0, "gamma0": 0.0, "lam_min": 0.5,
               "snapshot_stride": 200, "decompose_stride": 20, "rescale": True,
               "speed_tol": 0.05, "mass_tol": 1e-10, "soliton_tol": 1e-4},
    "diagnostics": {"grid_n": 4096, "grid_rmax": 200.0, "seed": 0, "battery": 20,
                    "A": 64.0, "A_values": dg.A_SWEEP, "coercivity_n": 1024,
                    "biharmonic_n": 1024, "biharmonic_rmax": 1024.0},
    "report": {"grid_n": 4096, "grid_rmax": 200.0, "seed": 0},
}


def _parser_for(default):
    if isinstance(default, bool):
        return _bool
    if isinstance(default, tuple):
        return _floats
    return type(default)


def load_config(path, command: str) -> dict:
    """Flat key = value file with '#' comments; unknown keys are rejected."""
    cfg = dict(DEFAULTS[command])
    if path is None:
        return cfg
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    cp = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                   delimiters=("=",), interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (A, A_values)
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from exc
    for key, raw in cp["run"].items():
        if key == "schema_version":
            if int(raw) != CONFIG_SCHEMA:
                raise ConfigurationError(f"config schema {raw} unsupported (expected {CONFIG_SCHEMA})")
            continue
        if key not in cfg:
            raise ConfigurationError(f"unknown config key {key!r} for {command}")
        try:
            cfg[key] = _parser_for(cfg[key])(raw)
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc
    return cfg


def _check(name, value, tolerance, passed, report_only=False, **extra) -> dict:
    out = {"name": name, "value": value, "tolerance": tolerance, "pass": bool(passed)}
    if report_only:
        out["report_only"] = True
    out.update(extra)
    return out


def _finish(stage_dir: Path, cfg: dict, checks: list, extra: dict | None = None) -> dict:
    report = {"schema": CONFIG_SCHEMA, "checks": checks,
              "pass": all(c["pass"] for c in checks if not c.get("report_only"))}
    if extra:
        report.update(extra)
    write_json(stage_dir / "report.json", report)
    return report


def _stage_dir(out: Path, name: str, cfg: dict) -> Path:
    d = out / name
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FormatError(f"cannot create {d}: {exc}") from exc
    write_json(d / "config.json", {"schema": CONFIG_SCHEMA, "config": cfg})
    return d


def _grid(cfg):
    return sp.make_grid(cfg["grid_n"], cfg["grid_rmax"])


def _load_gs(out: Path, cfg):
    gs = load_ground_state(out / "ground-state")
    if gs.grid != _grid(cfg):
        raise ConfigurationError(f"ground state on {gs.grid}, config asks for {_grid(cfg)}")
    return gs


def _load_ps(out: Path, cfg):
    gs = _load_gs(out, cfg)
    return load_profile_set(out / "profile", gs)


# -- subcommands ---------------------------------------------------------------------

def cmd_ground_state(cfg: dict, out: Path) -> dict:
    d = _stage_dir(out, "ground-state", cfg)
    gs = solve_ground_state(_grid(cfg), tol=cfg["tol"], max_iter=cfg["max_iter"])
    save_ground_state(d, gs)
    poh = pohozaev_report(gs)
    B = gs.mass
    checks = [
        _check("residual", gs.residual_norm, cfg["tol"], gs.residual_norm <= cfg["tol"]),
        _check("kinetic_equals_3_mass", abs(gs.kinetic / B - 3), cfg["virial_tol"],
               abs(gs.kinetic / B - 3) <= cfg["virial_tol"]),
        _check("potential_equals_4_mass", abs(gs.potential / B - 4), cfg["virial_tol"],
               abs(gs.potential / B - 4) <= cfg["virial_tol"]),
    ]
    energy = 0.5 * gs.kinetic - 0.375 * gs.potential
    checks.append(_check("energy_zero", abs(energy) / B, cfg["virial_tol"],
                         abs(energy) / B <= cfg["virial_tol"]))
    return _finish(d, cfg, checks, {"pohozaev": poh})


def cmd_profile(cfg: dict, out: Path) -> dict:
    for b in (*cfg["b_values"], *cfg["beta_values"]):
        ModParams(b, 0.0)  # range guard before any work
    gs = _load_gs(out, cfg)
    d = _stage_dir(out, "profile", cfg)
    ps = build_profile_set(gs)
    save_profile_set(d, ps)
    sc = scaling_report(ps, cfg["b_values"], cfg["beta_values"])
    em = energy_momentum_expansion(ps)
    with open(d / "phi_vs_b.csv", "w", encoding="utf-8") as fh:
        fh.write("b,phi_l2\n")
        for b, v in zip(sc["phi_b"]["b"], sc["phi_b"]["l2"]):
            fh.write(f"{b:.17g},{v:.17g}\n")
    e_dev = abs(em["e1_fit"] / ps.e1 - 1)
    p_dev = abs(em["p1_fit"] / ps.p1 - 1)
    checks = [
        _check("phi_slope_b", sc["phi_b"]["slope"], 4.5, sc["phi_b"]["slope"] >= 4.5),
        _check("mass_slope_b", sc["mass_deviation"]["slope"], 0.3,
               abs(sc["mass_deviation"]["slope"] - 4) <= 0.3),
        _check("energy_over_b2_vs_e1", e_dev, 0.02, e_dev <= 0.02),
        _check("momentum_over_beta_vs_p1", p_dev, 0.02, p_dev <= 0.02),
        _check("phi_slope_beta", sc["phi_beta"]["slope"], 2.5, sc["phi_beta"]["slope"] >= 2.5,
               report_only=True),
    ]
    return _finish(d, cfg, checks, {"scaling": sc, "expansion": em, "e1": ps.e1, "p1": ps.p1})


def cmd_modulation(cfg: dict, out: Path) -> dict:
    d = _stage_dir(out, "modulation", cfg)
    try:
        st = ModulationState(b=cfg["b0"], beta=(0.0, 0.0, cfg["beta0"]), lam=cfg["lam0"],
                             gamma=cfg["gamma0"])
        traj = integrate(st, cfg["s_span"], cfg["ds"])
        write_trajectory_csv(d / "trajectory.csv", traj)
        cf = closed_form(st, traj.s)
        err = max(float(np.max(np.abs(traj.b - cf["b"]))),
                  float(np.max(np.abs(traj.lam - cf["lam"]) / cf["lam"])))
        inv_b = np.ptp(traj.b / np.sqrt(traj.lam))
        inv_beta = np.ptp(traj.beta[:, 2] / traj.lam)
        fit = fit_blowup_laws(traj, tail=min(cfg["fit_tail"], len(traj)))
    except (FormatError, MissingArtifactError):
        raise
    except HalfwaveError as exc:
        raise ModulationError(f"{type(exc).__name__}: {exc}") from exc
    checks = [
        _check("closed_form", err, 1e-8, err <= 1e-8),
        _check("invariant_b_over_sqrt_lambda", float(inv_b), 1e-9, inv_b <= 1e-9),
        _check("invariant_beta_over_lambda", float(inv_beta), 1e-9, inv_beta <= 1e-9),
        _check("lambda_exponent", fit.exponent, 0.05, abs(fit.exponent - 2) <= 0.05),
        _check("blowup_speed_exponent", fit.speed_exponent, 0.05,
               abs(fit.speed_exponent + 1) <= 0.05,
               printed_exponent=fit.printed_speed_exponent, note=fit.note),
    ]
    return _finish(d, cfg, checks, {"fit": fit.as_dict()})


def cmd_evolve(cfg: dict, out: Path) -> dict:
    ps = _load_ps(out, cfg)
    d = _stage_dir(out, "evolve", cfg)
    ecfg = EvolutionConfig(grid_n=cfg["grid_n"], grid_rmax=cfg["grid_rmax"], dt=cfg["dt"],
                           t_end=cfg["t_end"], b0=cfg["b0"], lam0=cfg["lam0"],
                           gamma0=cfg["gamma0"], lam_min=cfg["lam_min"],
                           snapshot_stride=cfg["snapshot_stride"],
                           decompose_stride=cfg["decompose_stride"], rescale=cfg["rescale"])
    try:
        res = evolve(ecfg, ps, d)
    except (FormatError, MissingArtifactError):
        raise
    except HalfwaveError as exc:
        raise EvolutionError(f"{type(exc).__name__}: {exc}") from exc
    info = summary(res)
    t, lam, b, mod = (res.column(c) for c in ("t", "lambda", "b", "mod_norm"))
    checks = [_check("mass_drift", info["mass_drift"], cfg["mass_tol"],
                     info["mass_drift"] <= cfg["mass_tol"])]
    if res.truncated:
        checks.append(_check("run_complete", res.truncated, None, False))
    if cfg["b0"] == 0.0:
        Q = ps.Q
        exact = Q * np.exp(1j * (t[-1] + cfg["gamma0"]))
        err = (res.final - exact).norm() / Q.norm() / max(t[-1] - t[0], 1e-300)
        checks.append(_check("soliton_error_per_unit_time", err, cfg["soliton_tol"],
                             err <= cfg["soliton_tol"]))
    else:
        ldot = np.gradient(lam, t, edge_order=2)
        dev = float(np.max(np.abs(-ldot / b - 1)))
        checks.append(_check("lambda_dot_equals_minus_b", dev, cfg["speed_tol"],
                             dev <= cfg["speed_tol"]))
        C = float(np.max(mod / lam**2))
        checks.append(_check("mod_over_lambda_squared", C, None, np.isfinite(C),
                             report_only=True))
    return _finish(d, cfg, checks, {"summary": info})


def _random_field(grid, rng, sector=0):
    c = rng.standard_normal(4)
    width = 0.5 + 4 * abs(c[2])
    vals = (c[0] + 1j * c[1]) * np.exp(-(grid.r / width) ** 2) * np.cos(c[3] * grid.r)
    if sector == 1:
        vals = vals * grid.r / width
    return sp.SectorField(grid, sector, vals)


def cmd_diagnostics(cfg: dict, out: Path) -> dict:
    d = _stage_dir(out, "diagnostics", cfg)
    rng = np.random.default_rng(cfg["seed"])
    try:
        entries = []
        grid = _grid(cfg)
        worst = 0.0
        for k in range(cfg["battery"]):
            u = _random_field(grid, rng)
            exact = sp.half_norm_sq(u)
            worst = max(worst, abs(sp.smoothed_half_norm_sq(u) - exact) / exact)
        entries.append(dg.report_entry("smoothed_half_norm_identity", {"fields": cfg["battery"]},
                                       worst, 1e-6, None, grid, None, worst <= 1e-6))
        cgrid = sp.make_grid(cfg["coercivity_n"], cfg["grid_rmax"])
        gs = solve_ground_state(cgrid, tol=1e-9)
        cons = dg.CoercivityConstraints.from_ground_state(gs)
        rep = dg.coercivity_check(gs, cfg["A"], cons)
        entries.append(dg.report_entry("coercivity_constrained", rep.block_minima, rep.minimum,
                                       1e-5, rep.minimum, cgrid, cfg["A"], rep.minimum > 1e-5))
        free = dg.coercivity_check(gs, cfg["A"], None)
        entries.append(dg.report_entry("coercivity_unconstrained", free.block_minima, free.minimum,
                                       0.0, None, cgrid, cfg["A"], free.minimum <= 0))
        bgrid = sp.make_grid(cfg["biharmonic_n"], cfg["biharmonic_rmax"])
        sweep = dg.biharmonic_sweep(bgrid, A_values=cfg["A_values"])
        entries.append(dg.report_entry("biharmonic_decay", {"A": sweep["A"]},
                                       sweep["operator_norm"], sweep["slope"],
                                       max(sweep["operator_norm_times_A"]), bgrid, sweep["A"],
                                       abs(sweep["slope"] + 1) <= 0.2))
        with open(d / "coercivity.csv", "w", encoding="utf-8") as fh:
            fh.write("block,constrained_minimum,unconstrained_minimum\n")
            for key in rep.block_minima:
                fh.write(f"{key},{rep.block_minima[key]:.17g},{free.block_minima[key]:.17g}\n")
    except (FormatError, MissingArtifactError):
        raise
    except HalfwaveError as exc:
        raise DiagnosticsError(f"{type(exc).__name__}: {exc}") from exc
    checks = [_check(e["check_name"], e["lhs"], e["rhs_or_bound"], e["pass"], entry=e)
              for e in entries]
    return _finish(d, cfg, checks)


def cmd_report(cfg: dict, out: Path) -> dict:
    stages = {}
    for name in ("ground-state", "profile", "modulation", "evolve", "diagnostics"):
        path = out / name / "report.json"
        if path.exists():
            stages[name] = read_json(path)
    if not stages:
        raise MissingArtifactError(f"no stage reports under {out}")
    report = {"schema": CONFIG_SCHEMA, "stages": stages,
              "pass": all(s["pass"] for s in stages.values())}
    write_json(out / "report.json", report)
    return report


COMMANDS = {"ground-state": cmd_ground_state, "profile": cmd_profile,
            "modulation": cmd_modulation, "evolve": cmd_evolve,
            "diagnostics": cmd_diagnostics, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="halfwave",
                                     description="Radial half-wave blowup laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value file")
        p.add_argument("--out", default="halfwave-out", help="output directory")
        p.add_argument("--grid-n", type=int)
        p.add_argument("--grid-rmax", type=float)
        p.add_argument("--seed", type=int)
    return parser


def run(argv=None) -> tuple[int, dict]:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        for key in ("grid_n", "grid_rmax", "seed"):
            value = getattr(args, key)
            if value is not None:
                cfg[key] = value
        report = COMMANDS[args.command](cfg, Path(args.out))
    except HalfwaveError as exc:
        return exc.exit_code, exc.to_json()
    return (0 if report["pass"] else CHECK_FAILURE_CODE.get(args.command, 1)), report


def main(argv=None) -> int:
    code, payload = run(argv)
    if code and "error" in payload:
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(json.dumps({"pass": payload.get("pass")}))
    return code


if __name__ == "__main__":
    sys.exit(main())
