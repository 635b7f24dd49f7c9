"""Scenario runner: ``pointer-states run|constants|validate <config.json>``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import observables as obs
from .analytic import final_mixture, propagate
from .grids import GridSpec, Rep, write_field_csv
from .oracle import PDERunConfig, propagate_by_characteristics, solve_pde
from .params import (DIAGONAL, Bath, DerivedConstants, PhysicalParams, Sector, SpinAmplitudes,
                     derive_constants, validate)
from .states import BUILDERS, DensityMatrix, assemble_initial, build_state

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
ENGINES = ("analytic", "ode-oracle", "pde-oracle")
TIME_UNITS = ("abs", "tau_R", "tau_D", "settling")
TOP_KEYS = ("params", "bath", "initial", "spin", "grid", "times", "engines", "observables",
            "output", "pde", "ode")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# observables available to scenarios
# ---------------------------------------------------------------------------

def _fidelity(sector):
    def f(rho, dc):
        p = dc.params
        return obs.coherent_fidelity(rho[sector], sector.sign * dc.pointer_center, 0.0, p)
    return f


def _mixture_distance(rho, dc):
    return obs.grid_l1_distance(rho, final_mixture(rho.amps, dc, rho.grid))


OBSERVABLES = {
    "trace": lambda rho, dc: obs.total_trace(rho),
    "trace_uu": lambda rho, dc: obs.trace(rho[Sector.UU]),
    "trace_dd": lambda rho, dc: obs.trace(rho[Sector.DD]),
    "purity": lambda rho, dc: obs.purity(rho),
    "linear_entropy": lambda rho, dc: obs.linear_entropy(rho),
    "coherence_norm": lambda rho, dc: obs.coherence_norm(rho),
    "log_coherence_norm": lambda rho, dc: obs.log_coherence_norm(rho),
    "coherence_sup": lambda rho, dc: obs.coherence_sup(rho),
    "pointer_separation": lambda rho, dc: obs.pointer_separation(rho),
    "fidelity_uu": _fidelity(Sector.UU),
    "fidelity_dd": _fidelity(Sector.DD),
    "l1_to_mixture": _mixture_distance,
}


# ---------------------------------------------------------------------------
# scenario parsing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    params: PhysicalParams
    initial: dict
    amps: SpinAmplitudes
    grid: GridSpec
    times: tuple
    engines: tuple
    observables: tuple
    output_dir: Path
    write_fields: bool = False
    fit_window: tuple | None = None
    pde_scheme: str = "spectral"
    pde_cfl: float = 0.9
    ode_steps: int | None = None
    source: dict | None = None


def _section(cfg, key, kind=dict, required=True):
    if key not in cfg:
        if required:
            raise ConfigError(f"{key}: missing required section")
        return None
    val = cfg[key]
    if not isinstance(val, kind):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {type(val).__name__}")
    return val


def _number(section, key, where, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"{where}.{key}: missing")
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def _complex(v, where):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    raise ConfigError(f"{where}: expected a number or [re, im], got {v!r}")


def parse_params(cfg: dict) -> PhysicalParams:
    p = _section(cfg, "params")
    b = _section(cfg, "bath", required=False) or {"kind": "zero"}
    known = {"m", "omega", "lambda_spin", "epsilon", "gamma", "hbar", "kB"}
    unknown = set(p) - known
    if unknown:
        raise ConfigError(f"params: unknown keys {sorted(unknown)}; valid: {sorted(known)}")
    defaults = PhysicalParams()
    values = {k: _number(p, k, "params", getattr(defaults, k)) for k in known}
    kind = b.get("kind", "zero")
    if kind == "zero":
        bath = Bath.zero()
    elif kind == "high":
        bath = Bath.high(_number(b, "kT", "bath"))
    elif kind == "general":
        bath = Bath.general(_number(b, "T", "bath"))
    else:
        raise ConfigError(f"bath.kind: unknown {kind!r}; valid: {list(Bath.KINDS)}")
    return PhysicalParams(bath=bath, **values)


def _parse_grid(cfg, override):
    g = _section(cfg, "grid", required=False) or {}
    base = GridSpec()
    n = g.get("N")
    N_R = int(_number(g, "N_R", "grid", n or base.N_R))
    N_r = int(_number(g, "N_r", "grid", n or base.N_r))
    if override:
        N_R = N_r = override
    try:
        return GridSpec(N_R, N_r, _number(g, "R_extent", "grid", base.R_extent),
                        _number(g, "r_extent", "grid", base.r_extent))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def _parse_times(cfg, dc):
    t = cfg.get("times")
    if t is None:
        raise ConfigError("times: missing required section")
    unit = "abs"
    if isinstance(t, dict):
        unit = t.get("unit", "abs")
        if "values" in t:
            values = t["values"]
        else:
            n = int(_number(t, "n_samples", "times"))
            if n < 1:
                raise ConfigError("times.n_samples: must be >= 1")
            values = np.linspace(_number(t, "t_min", "times", 0.0),
                                 _number(t, "t_max", "times"), n).tolist()
    elif isinstance(t, list):
        values = t
    else:
        raise ConfigError("times: expected a list or an object")
    if unit not in TIME_UNITS:
        raise ConfigError(f"times.unit: unknown {unit!r}; valid: {list(TIME_UNITS)}")
    if not values or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                             for v in values):
        raise ConfigError("times: must be a non-empty list of numbers")
    scale = {"abs": 1.0, "tau_R": dc.tau_R, "tau_D": dc.tau_D,
             "settling": dc.settling_time}[unit]
    times = [float(v) * scale for v in values]
    if times[0] < 0 or any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError("times: must be non-negative and strictly increasing")
    return tuple(times)


def parse_scenario(cfg: dict, output_dir=None, engines=None, grid_n=None) -> Scenario:
    if not isinstance(cfg, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = set(cfg) - set(TOP_KEYS)
    if unknown:
        raise ConfigError(f"config: unknown sections {sorted(unknown)}; valid: {list(TOP_KEYS)}")
    params = parse_params(cfg)
    errs = [i for i in validate(params) if i.level == "error"]
    if errs:
        raise ConfigError("; ".join(f"params.{i.field}: {i.message}" for i in errs))
    try:
        dc = derive_constants(params)
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None

    initial = dict(_section(cfg, "initial"))
    kind = initial.get("kind")
    if kind not in BUILDERS:
        raise ConfigError(f"initial.kind: unknown {kind!r}; valid: {sorted(BUILDERS)}")

    spin = _section(cfg, "spin", required=False) or {}
    try:
        amps = SpinAmplitudes.normalized(_complex(spin.get("a", 1 / math.sqrt(2)), "spin.a"),
                                         _complex(spin.get("b", 1 / math.sqrt(2)), "spin.b"))
    except ZeroDivisionError:
        raise ConfigError("spin: a and b cannot both vanish") from None

    engs = tuple(engines) if engines else tuple(cfg.get("engines", ["analytic"]))
    bad = [e for e in engs if e not in ENGINES]
    if not engs or bad:
        raise ConfigError(f"engines: unknown {bad}; valid: {list(ENGINES)}" if bad
                          else "engines: at least one engine required")

    names = tuple(cfg.get("observables", ["trace"]))
    bad = [o for o in names if o not in OBSERVABLES]
    if bad:
        raise ConfigError(f"observables: unknown {bad}; valid: {sorted(OBSERVABLES)}")

    out = _section(cfg, "output", required=False) or {}
    pde = _section(cfg, "pde", required=False) or {}
    ode = _section(cfg, "ode", required=False) or {}
    if pde.get("scheme", "spectral") not in PDERunConfig.SCHEMES:
        raise ConfigError(f"pde.scheme: unknown {pde['scheme']!r}; valid: {list(PDERunConfig.SCHEMES)}")
    window = out.get("fit_window")
    if window == "auto":
        window = list(obs.default_fit_window(dc))
    elif window is not None and (not isinstance(window, list) or len(window) != 2):
        raise ConfigError('output.fit_window: expected [t_min, t_max] or "auto"')
    return Scenario(
        params=params,
        initial=initial,
        amps=amps,
        grid=_parse_grid(cfg, grid_n),
        times=_parse_times(cfg, dc),
        engines=engs,
        observables=names,
        output_dir=Path(output_dir or out.get("dir", "out")),
        write_fields=bool(out.get("fields", False)),
        fit_window=tuple(window) if window else None,
        pde_scheme=pde.get("scheme", "spectral"),
        pde_cfl=_number(pde, "cfl", "pde", 0.9),
        ode_steps=int(ode["steps"]) if "steps" in ode else None,
        source=cfg,
    )


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def _params_dict(p: PhysicalParams) -> dict:
    return {"m": p.m, "omega": p.omega, "lambda_spin": p.lambda_spin, "epsilon": p.epsilon,
            "gamma": p.gamma, "hbar": p.hbar, "kB": p.kB,
            "bath": {"kind": p.bath.kind, "kT": p.bath.kT, "T": p.bath.T}}


def _header(s: Scenario) -> dict:
    return {"code": f"pointer_states {__version__}",
            "params": json.dumps(_params_dict(s.params), sort_keys=True),
            "initial": json.dumps(s.initial, sort_keys=True)}


def _evolve(engine: str, s: Scenario, rho0: DensityMatrix, dc: DerivedConstants) -> dict:
    if engine == "analytic":
        return {t: propagate(rho0, t, dc) for t in s.times}
    if engine == "ode-oracle":
        return {t: propagate_by_characteristics(rho0, t, dc, s.ode_steps) for t in s.times}
    positive = [t for t in s.times if t > 0]
    states = {0.0: rho0} if 0.0 in s.times else {}
    if positive:
        cfg = PDERunConfig(end_time=positive[-1], scheme=s.pde_scheme, cfl=s.pde_cfl)
        run = solve_pde(rho0, dc, positive, cfg)
        run.write_diagnostics(s.output_dir / "pde_diagnostics.csv")
        states.update(run.snapshots)
    return states


def _relative_l2(a: DensityMatrix, b: DensityMatrix, sector: Sector) -> float:
    x = a.field(sector, Rep.FOURIER).actual
    y = b.field(sector, Rep.FOURIER).actual
    ref = np.linalg.norm(x)
    return float(np.linalg.norm(x - y) / ref) if ref else float(np.linalg.norm(y))


def run_scenario(s: Scenario) -> dict:
    out = s.output_dir
    out.mkdir(parents=True, exist_ok=True)
    dc = derive_constants(s.params)
    header = _header(s)
    (out / "constants.json").write_text(
        json.dumps({"code": header["code"], "params": _params_dict(s.params),
                    "constants": dc.as_dict()}, indent=2, sort_keys=True) + "\n")

    summary = {"code": header["code"], "status": "ok", "constants": dc.as_dict(),
               "times": list(s.times), "engines": list(s.engines), "series": {}, "fits": {},
               "fidelities": {}, "cross_engine_relative_l2": {}}
    results = {}
    try:
        kw = {k: v for k, v in s.initial.items() if k != "kind"}
        rho0 = assemble_initial(build_state(s.initial["kind"], s.params, **kw), s.amps, s.grid)
        for engine in s.engines:
            results[engine] = _evolve(engine, s, rho0, dc)
    except Exception as exc:
        summary["status"] = "failed"
        summary["error"] = f"{type(exc).__name__}: {exc}"
        summary["completed_engines"] = list(results)
        _write_summary(out, summary)
        raise

    primary = s.engines[0]
    for engine, states in results.items():
        suffix = "" if engine == primary else f".{engine}"
        series_out = {}
        for name in s.observables:
            fn = OBSERVABLES[name]
            values = [float(fn(states[t], dc)) for t in s.times]
            ts = obs.TimeSeries(np.array(s.times), np.array(values), name,
                                log=name.startswith("log_"))
            ts.to_csv(out / f"series_{name}{suffix}.csv", {**header, "engine": engine})
            series_out[name] = values
            if name in ("coherence_norm", "log_coherence_norm"):
                summary["fits"].setdefault(engine, {})[name] = _fit(ts, s.fit_window)
        summary["series"][engine] = series_out

        final = states[s.times[-1]]
        if dc.overdamped and s.params.bath.kind == "zero":
            summary["fidelities"][engine] = {
                sec.tag: _fidelity(sec)(final, dc) for sec in DIAGONAL if s.amps.weight(sec)}

    for engine in s.engines[1:]:
        summary["cross_engine_relative_l2"][engine] = {
            repr(t): {sec.tag: _relative_l2(results[primary][t], results[engine][t], sec)
                      for sec in Sector}
            for t in s.times}

    if s.write_fields:
        for t in s.times:
            rho = results[primary][t]
            for sec in Sector:
                write_field_csv(rho[sec], out / f"field_{sec.tag}_{t:.6g}.csv",
                                comment="\n".join(f"{k}={v}" for k, v in header.items()))
    _write_summary(out, summary)
    return summary


def _fit(ts, window):
    try:
        tau, r2 = obs.fit_decoherence_time(ts, window)
    except obs.FitError as exc:
        return {"error": str(exc)}
    return {"tau": tau, "r_squared": r2}


def _write_summary(out: Path, summary: dict):
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# constants table
# ---------------------------------------------------------------------------

_UNITS = {
    "D": "hbar^2/(length^2 time)", "nbar": "1", "lambda_plus": "length^2",
    "lambda_minus": "length^2", "Gamma": "length^2", "tau_R": "time", "tau_D": "time",
    "alpha_sq": "1", "delta_sep": "length", "lambda_dB": "length",
    "alpha_time_ratio": "1", "settling_time": "time",
}


def format_constants(dc: DerivedConstants) -> str:
    rows = []
    for k, v in dc.as_dict().items():
        if isinstance(v, list):
            text = f"{v[0]:.10g}{v[1]:+.10g}j"
        elif v is None:
            text = "-"
        else:
            text = f"{v:.10g}"
        rows.append(f"{k:<18} {text:>28}  {_UNITS.get(k, '')}")
    return "\n".join(rows)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pointer-states", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "evolve a scenario and write outputs"),
                        ("constants", "print derived constants"),
                        ("validate", "check a config without running it")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="scenario JSON file")
        sp.add_argument("--output-dir", help="override output.dir")
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        sp.add_argument("--engine", action="append", choices=ENGINES,
                        help="override engines (repeatable)")
        sp.add_argument("--grid", type=int, metavar="N", help="override both grid axes")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "constants":
            params = parse_params(cfg)
            dc = derive_constants(params)
            if args.json:
                print(json.dumps(dc.as_dict(), indent=2, sort_keys=True))
            else:
                print(format_constants(dc))
            if args.output_dir:
                Path(args.output_dir).mkdir(parents=True, exist_ok=True)
                (Path(args.output_dir) / "constants.json").write_text(
                    json.dumps(dc.as_dict(), indent=2, sort_keys=True) + "\n")
            return EXIT_OK
        scenario = parse_scenario(cfg, args.output_dir, args.engine, args.grid)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        issues = validate(scenario.params)
        report = {"ok": True, "warnings": [f"{i.field}: {i.message}" for i in issues]}
        if args.json:
            print(json.dumps(report, indent=2, sort_keys=True))
        else:
            print("config ok")
            for w in report["warnings"]:
                print(f"warning: {w}")
        return EXIT_OK

    try:
        summary = run_scenario(scenario)
    except Exception as exc:   # engine failures: partial outputs already flagged
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(f"wrote outputs to {scenario.output_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
