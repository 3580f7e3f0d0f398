"""``nlbattery`` command-line front end.

Subcommands: charge | sweep | classical | josephson | verify.  Every
subcommand takes ``--config FILE`` plus any number of ``--key value``
overrides; see :mod:`nlbattery.config` for the keys.

Exit codes: 0 ok, 1 verification failure, 2 configuration error,
3 physics-invariant violation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .certify import ReportOptions, build_gqa_report, fit_scaling_exponent
from .classical import (
    ClassicalParams,
    default_step,
    energy_matched_initial,
    integrate_classical,
)
from .config import ScenarioConfig, build_config, read_config_file
from .dynamics import charging_trace, optimal_charging_time, time_grid
from .errors import (
    BatteryError,
    ConfigError,
    CutoffTooSmall,
    EvenOrderUnsupported,
    FlatTrace,
    InsufficientPointsForFit,
    InvariantViolation,
    StepTooLarge,
)
from .fock import (
    ModeCutoff,
    coherent_amplitudes,
    minimal_dim,
    product_state,
    squeezed_vacuum_amplitudes,
)
from .models import (
    JosephsonSpec,
    ModelSpec,
    build_josephson_full,
    josephson_effective_coupling,
    taylor_resonant_terms,
)
from .verify import SUITES, run_suites

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_PHYSICS = 0, 1, 2, 3


# --- output helpers ----------------------------------------------------------


def versions():
    return {"nlbattery": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else f"{x:.17g}"


def write_csv(path, columns, rows, config: ScenarioConfig):
    """CSV with a ``# config:`` header line; NaN becomes an empty field."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# config: " + json.dumps(config.resolved(), sort_keys=True), ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _with_suffix(path, tag):
    path = Path(path)
    return path.with_name(f"{path.stem}_{tag}{path.suffix or '.csv'}")


# --- scenario construction ---------------------------------------------------


def _order(cfg):
    return 1 if cfg.kind == "linear" else (cfg.n or cfg.N)


def _initial_amplitudes(cfg, n):
    """Charger amplitudes (list) for the configured initial state."""
    nbar = cfg.N / n
    if cfg.initial == "fock":
        level = cfg.initial_level
        if level is None:
            level = max(1, int(round(nbar)))
        if level < 0:
            raise ConfigError("initial_level must be non-negative")
        amps = np.zeros(level + 1, dtype=complex)
        amps[level] = 1.0
        return amps
    if cfg.initial == "coherent":
        alpha = math.sqrt(nbar)
        return coherent_amplitudes(alpha, minimal_dim(coherent_amplitudes, alpha))
    if cfg.initial == "squeezed":
        r = math.asinh(math.sqrt(nbar))
        return squeezed_vacuum_amplitudes(r, minimal_dim(squeezed_vacuum_amplitudes, r))
    return load_amplitudes(cfg.amplitudes_file)


def load_amplitudes(path):
    """One amplitude per line, ``re`` or ``re im``; '#' starts a comment."""
    try:
        data = np.loadtxt(path, ndmin=2, comments="#")
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read amplitudes file {path}: {exc}") from exc
    if data.shape[1] == 1:
        amps = data[:, 0].astype(complex)
    elif data.shape[1] == 2:
        amps = data[:, 0] + 1j * data[:, 1]
    else:
        raise ConfigError("amplitudes file needs one or two columns")
    norm2 = float(np.vdot(amps, amps).real)
    if abs(norm2 - 1.0) > 1e-10:
        raise ConfigError(f"amplitudes in {path} have norm^2 {norm2!r}, expected 1")
    return amps


def build_scenario(cfg: ScenarioConfig, initial=None):
    """``(spec, state)`` for the configured model, cutoff and charger input."""
    if initial is not None:
        cfg = ScenarioConfig(**{**cfg.resolved(), "initial": initial})
    n = _order(cfg)
    amps = _initial_amplitudes(cfg, n)
    dim_a = cfg.dim_a or max(amps.size, 2)
    if cfg.kind == "linear":
        dim_a = max(dim_a, cfg.N + 1)
    if dim_a < amps.size:
        raise ConfigError(f"dim_a={dim_a} cannot hold the initial state (needs {amps.size})")
    dim_b = cfg.dim_b or max(n * (dim_a - 1) + 1, cfg.N + 1)
    if dim_a * dim_b > cfg.max_dim:
        raise ConfigError(
            f"cutoff {dim_a}x{dim_b}={dim_a * dim_b} exceeds max_dim={cfg.max_dim}; "
            f"raise max_dim to at least {dim_a * dim_b}"
        )
    cutoff = ModeCutoff(dim_a, dim_b, max_dim=cfg.max_dim)
    try:
        if cfg.kind == "linear":
            spec = ModelSpec.linear(cfg.N, cfg.coupling, omega0=cfg.omega0, cutoff=cutoff)
        else:
            spec = ModelSpec.nonlinear(cfg.N, cfg.coupling, omega0=cfg.omega0, n=n,
                                       cutoff=cutoff, coupling_mode=cfg.coupling_mode)
        state = product_state(amps, [1.0], cutoff)
    except BatteryError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return spec, state


def time_scale(cfg: ScenarioConfig, spec: ModelSpec) -> float:
    """Rate whose inverse is the I/O time unit."""
    if cfg.time_unit == "transfer":
        return spec.g_n * math.sqrt(math.factorial(spec.n))
    return spec.g1


# --- subcommands -------------------------------------------------------------


def _charge_one(cfg, initial, out_csv):
    spec, state = build_scenario(cfg, initial)
    scale = time_scale(cfg, spec)
    w0 = spec.omega0
    horizon = cfg.t_max / scale
    try:
        tau, e_max = optimal_charging_time(spec, state, horizon=horizon)
    except FlatTrace:
        tau, e_max = None, None
    grid = time_grid(horizon, cfg.num_points)
    if cfg.insert_peak and tau is not None and 0.0 < tau < horizon:
        grid = np.union1d(grid, [tau])
    trace = charging_trace(spec, state, grid)
    t_out = trace.times * scale
    e_out = trace.energy_B / w0
    p_out = np.full(t_out.size, np.nan)
    p_out[1:] = e_out[1:] / t_out[1:]
    rows = zip(t_out, e_out, p_out, trace.abs_overlap0, trace.varH_B / w0**2,
               trace.norm, trace.energy_total / w0, trace.charge_Q)
    write_csv(out_csv, ["t", "E_B", "P_B", "abs_overlap0", "varH_B", "norm", "energy_total", "Q"],
              rows, cfg)
    return {
        "initial": initial or cfg.initial,
        "csv": str(out_csv),
        "tau_bar": None if tau is None else tau * scale,
        "E_max": None if e_max is None else e_max / w0,
        "E_B_grid_max": float(e_out.max()),
        "cutoff": [spec.cutoff.dim_a, spec.cutoff.dim_b],
        "g_n": spec.g_n,
    }


def cmd_charge(cfg: ScenarioConfig) -> int:
    if cfg.preset == "compare-inputs":
        runs = [_charge_one(cfg, kind, _with_suffix(cfg.out, kind))
                for kind in ("fock", "coherent", "squeezed")]
        payload = {"config": cfg.resolved(), "runs": runs, "versions": versions()}
    else:
        run = _charge_one(cfg, None, cfg.out)
        payload = {"config": cfg.resolved(), "versions": versions(), **run}
    write_json(cfg.json_path, payload)
    return EXIT_OK


# unit of each report field: "time", "energy", "power", "energy2", "rate2" or None
_RECORD_UNITS = {
    "tau_bar": "time", "tau_qsl": "time", "tau_qsl_nonlinear": "time",
    "E_max": "energy", "E_B_max_cl": "energy", "P_at_tau_bar": "power",
    "P_bound_at_tau_bar": "power", "dH_B2": "energy2", "dH_NL2": "rate2",
}


def _to_io_units(record: dict, g1, w0):
    factor = {"time": g1, "energy": 1 / w0, "power": 1 / (w0 * g1),
              "energy2": 1 / w0**2, "rate2": 1 / g1**2}
    return {k: v * factor[_RECORD_UNITS[k]] if k in _RECORD_UNITS else v
            for k, v in record.items()}


def cmd_sweep(cfg: ScenarioConfig) -> int:
    if not cfg.N_list:
        raise ConfigError("N_list is empty")
    if cfg.kind != "nonlinear" or cfg.coupling_mode != "g1":
        raise ConfigError("sweep runs the non-linear model with coupling given as g1")
    g1, w0 = cfg.coupling, cfg.omega0
    options = ReportOptions(quadrature_nodes=cfg.quadrature_nodes, mapping_factor=cfg.mapping_factor)
    try:
        report = build_gqa_report(cfg.N_list, g1=g1, omega0=w0, options=options)
    except ValueError as exc:
        if isinstance(exc, BatteryError) and not isinstance(exc, InsufficientPointsForFit):
            raise
        raise ConfigError(str(exc)) from exc
    records = [_to_io_units(asdict(r), g1, w0) for r in report.records]
    linear = [_to_io_units(asdict(r), g1, w0) for r in report.linear_control]
    Ns = [r["N"] for r in records]
    fits = {
        "power_exponent": fit_scaling_exponent(Ns, [r["P_at_tau_bar"] for r in records]),
        "bound_exponent": fit_scaling_exponent(Ns, [r["P_bound_at_tau_bar"] for r in records]),
        "tau_exponent": fit_scaling_exponent(Ns, [r["tau_bar"] for r in records]),
    }
    if linear:
        fits["linear_power_exponent"] = fit_scaling_exponent(Ns, [r["P_at_tau_bar"] for r in linear])
    payload = {
        "config": cfg.resolved(),
        "records": records,
        "fits": {k: asdict(v) for k, v in fits.items()},
        "linear_control": linear,
        "checks": report.checks,
        "verdict": report.verdict,
        "versions": versions(),
    }
    write_json(cfg.json_path, payload)
    rows = [[r["N"], r["tau_bar"], r["tau_qsl"], r["E_max"], r["P_at_tau_bar"],
             r["P_bound_at_tau_bar"], r["bound_ratio"]] for r in records]
    write_csv(cfg.out, ["N", "tau_bar", "tau_qsl", "E_max", "P", "P_bound", "bound_ratio"],
              rows, cfg)
    return EXIT_OK


def cmd_classical(cfg: ScenarioConfig) -> int:
    n = _order(cfg)
    try:
        spec = ModelSpec(N=cfg.N, coupling=cfg.coupling, cutoff=ModeCutoff(cfg.N + 1, cfg.N + 1),
                         kind=cfg.kind, n=n, omega0=cfg.omega0,
                         coupling_mode="g1" if cfg.kind == "linear" else cfg.coupling_mode)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    params = ClassicalParams(n, spec.g_n, cfg.omega0)
    scale = time_scale(cfg, spec)
    initial = energy_matched_initial(n, cfg.N, cfg.frame)
    t_end = cfg.t_max / scale
    if cfg.dt is not None:
        # an explicit step is used as given and every step is written
        traj = integrate_classical(initial, params, t_end, cfg.dt / scale)
        keep = slice(None)
    else:
        spacing = t_end / (cfg.num_points - 1)
        sub = max(1, math.ceil(spacing / default_step(params, initial)))
        traj = integrate_classical(initial, params, t_end, spacing / sub)
        keep = slice(None, None, sub)
    w0 = cfg.omega0
    rows = zip(traj.times[keep] * scale, traj.energy_A[keep] / w0, traj.energy_B[keep] / w0,
               traj.energy_total[keep] / w0)
    write_csv(cfg.out, ["t", "E_A_cl", "E_B_cl", "E_total_cl"], rows, cfg)
    write_json(cfg.json_path, {
        "config": cfg.resolved(), "versions": versions(), "g_n": spec.g_n,
        "E_B_cl_max": float(traj.energy_B.max() / w0), "energy_drift": traj.energy_drift(),
    })
    return EXIT_OK


def cmd_josephson(cfg: ScenarioConfig) -> int:
    n = cfg.n or cfg.N
    try:
        jspec = JosephsonSpec(E_J=cfg.E_J, lambda1=cfg.lambda1, lambda2=cfg.lambda2, n=n,
                              omega2=cfg.omega2)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    max_order = cfg.max_order or n + 1
    if max_order < n + 1:
        raise ConfigError(f"max_order must be at least n + 1 = {n + 1}")
    terms = taylor_resonant_terms(jspec, max_order)
    coupling = (1, 0, 0, n)
    lead = [t for t in terms if t.order == n + 1 and t.monomial == coupling]
    ordered = lead + [t for t in terms if t not in lead]
    write_csv(cfg.out, ["order", "monomial", "coefficient"],
              [(t.order, t.label, t.coefficient) for t in ordered], cfg)

    dim_a = cfg.dim_a or 6
    dim_b = cfg.dim_b or n + 7
    if dim_a * dim_b > cfg.max_dim:
        raise ConfigError(f"cutoff {dim_a}x{dim_b} exceeds max_dim={cfg.max_dim}")
    H = build_josephson_full(jspec, ModeCutoff(dim_a, dim_b, max_dim=cfg.max_dim))
    element = H.element((0, n), (1, 0))
    g_n = josephson_effective_coupling(jspec)
    target = g_n * math.sqrt(math.factorial(n))
    write_json(cfg.json_path, {
        "config": cfg.resolved(), "versions": versions(),
        "g_n": g_n,
        "table_coefficient": lead[0].coefficient,
        "full_element": float(element.real),
        "full_element_imag": float(element.imag),
        "effective_element": target,
        "relative_deviation": float(element.real / target - 1.0),
        "cutoff": [dim_a, dim_b],
    })
    return EXIT_OK


def cmd_verify(cfg: ScenarioConfig) -> int:
    names = cfg.suites or None
    unknown = [s for s in (names or []) if s not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite(s) {unknown}; available: {sorted(SUITES)}")
    passed, failed = run_suites(names, mapping_factor=cfg.mapping_factor)
    print(json.dumps({"passed": passed, "failed": failed}, indent=2, sort_keys=True))
    return EXIT_OK if not failed else EXIT_VERIFY


COMMANDS = {
    "charge": cmd_charge,
    "sweep": cmd_sweep,
    "classical": cmd_classical,
    "josephson": cmd_josephson,
    "verify": cmd_verify,
}


# --- argument handling -------------------------------------------------------


def parse_overrides(tokens):
    """``--key value`` / ``--key=value`` pairs into a dict."""
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
        else:
            key = tok[2:]
            try:
                value = next(it)
            except StopIteration:
                raise ConfigError(f"--{key} needs a value") from None
        out[key] = value
    return out


def make_parser():
    parser = argparse.ArgumentParser(
        prog="nlbattery",
        description="Simulate and certify non-linear bosonic quantum batteries.",
        epilog="Any configuration key may be given as --key value (overrides the file).",
    )
    parser.add_argument("--version", action="version", version=f"nlbattery {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__ or name)
        p.add_argument("--config", help="flat 'key = value' configuration file")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        pairs = read_config_file(args.config) if args.config else {}
        cfg = build_config(pairs, parse_overrides(extra))
        return COMMANDS[args.command](cfg)
    except (ConfigError, EvenOrderUnsupported, CutoffTooSmall, InsufficientPointsForFit) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"physics invariant violated [{exc.name}]: {exc.detail}", file=sys.stderr)
        return EXIT_PHYSICS
    except StepTooLarge as exc:
        print(f"physics invariant violated [energy_drift]: {exc}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    sys.exit(main())
