"""Command-line front end.

A flat INI-style configuration (sections [bath], [drive], [control], [noise],
[run]) selects one of five commands: evolve, steady-state, gap, qsl, or
reproduce. Outputs are CSV tables with exact-round-trip float formatting, a
JSON metadata file, and (with --plot) an SVG figure per table.

Units: rates in multiples of the total bath decay rate, times in its inverse.
Exit code is 0 only when every requested computation met its residual or
tolerance contract.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import StabilityError, evolve, relax_constant, rhs_residual_norm
from .experiments import ResultTable, ScenarioConfig, SCENARIO_IDS, run_scenario
from .liouville import (
    DegenerateSteadyStateError,
    build_liouvillian,
    liouvillian_gap,
    qsl_activity,
    steady_state,
)
from .metrics import concurrence, fidelity_to_pure, partial_trace, purity
from .model import (
    BathConfig,
    ControlMode,
    DriveProtocol,
    NoiseConfig,
    PairingSpec,
    assemble_model,
    target_state,
)
from .operators import ground_state

COMMANDS = ("evolve", "steady-state", "gap", "qsl", "reproduce")


class ConfigError(ValueError):
    """Configuration problem, annotated with the offending line."""

    def __init__(self, message: str, line: int | None = None):
        prefix = f"config line {line}: " if line else "config: "
        super().__init__(prefix + message)
        self.line = line


_SCHEMA: dict[str, dict[str, str]] = {
    "bath": {
        "gamma_left": "float",
        "gamma_right": "float",
        "gamma_total": "float",
        "delta_gamma": "float",
        "gamma_free": "float",
        "phases": "floats",
    },
    "drive": {"omega": "float", "m": "float", "t_f": "float", "k": "float"},
    "control": {"mode": "str", "pairs": "str"},
    "noise": {"eta1": "float", "eta2": "float"},
    "run": {
        "command": "str",
        "scenario": "str",
        "n_qubits": "int",
        "detunings": "floats",
        "t_end": "float",
        "sample_dt": "float",
        "merge_dissipators": "bool",
    },
}


@dataclass
class RunConfig:
    command: str
    n_qubits: int
    bath: BathConfig
    protocol: DriveProtocol
    control: ControlMode
    pairing: PairingSpec
    noise: NoiseConfig
    detunings: np.ndarray | None
    scenario: str | None = None
    t_end: float = 3.0
    sample_dt: float = 0.02
    merge_dissipators: bool | None = None
    raw: dict = field(default_factory=dict)

    def build_model(self):
        return assemble_model(
            self.bath,
            self.detunings,
            self.protocol,
            self.control,
            self.pairing,
            noise=self.noise,
            n_qubits=self.n_qubits,
            merge_collective=self.merge_dissipators,
        )


def _parse_sections(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current: str | None = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in _SCHEMA:
                raise ConfigError(
                    f"unknown section [{current}]; expected one of {sorted(_SCHEMA)}", lineno
                )
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if current is None:
            raise ConfigError("key outside of any [section]", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in _SCHEMA[current]:
            raise ConfigError(f"unknown key '{key}' in section [{current}]", lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key '{key}' in section [{current}]", lineno)
        sections[current][key] = (value, lineno)
    return sections


def _convert(kind: str, raw: str, key: str, line: int):
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return tuple(float(x) for x in raw.replace(",", " ").split())
        return raw
    except ValueError:
        raise ConfigError(f"could not parse '{key} = {raw}' as {kind}", line) from None


def parse_config(text: str) -> RunConfig:
    """Validate the configuration text and fill documented defaults."""
    sections = _parse_sections(text)
    values: dict[str, dict] = {}
    lines: dict[tuple[str, str], int] = {}
    for sec, entries in sections.items():
        values[sec] = {}
        for key, (raw, lineno) in entries.items():
            values[sec][key] = _convert(_SCHEMA[sec][key], raw, key, lineno)
            lines[(sec, key)] = lineno

    def get(sec: str, key: str, default=None):
        return values.get(sec, {}).get(key, default)

    def fail(sec: str, key: str, message: str):
        raise ConfigError(message, lines.get((sec, key)))

    command = get("run", "command")
    if command is None:
        raise ConfigError("missing required key 'command' in section [run]")
    if command not in COMMANDS:
        fail("run", "command", f"command must be one of {COMMANDS}, got '{command}'")

    scenario = get("run", "scenario")
    if command == "reproduce":
        if scenario is None:
            raise ConfigError("command = reproduce needs 'scenario' in section [run]")
        if scenario not in SCENARIO_IDS:
            fail("run", "scenario", f"scenario must be one of {SCENARIO_IDS}")

    n_qubits = get("run", "n_qubits", 2)
    if n_qubits < 1:
        fail("run", "n_qubits", "n_qubits must be >= 1")

    # bath: explicit left/right rates, or (gamma_total, delta_gamma)
    g_left, g_right = get("bath", "gamma_left"), get("bath", "gamma_right")
    if g_left is None and g_right is None:
        total = get("bath", "gamma_total", 1.0)
        dgamma = get("bath", "delta_gamma", 0.0)
        g_right = 0.5 * (total + dgamma)
        g_left = 0.5 * (total - dgamma)
    else:
        g_left = g_left or 0.0
        g_right = g_right or 0.0
        if get("bath", "gamma_total") is not None or get("bath", "delta_gamma") is not None:
            raise ConfigError(
                "give either gamma_left/gamma_right or gamma_total/delta_gamma, not both"
            )
    for key, val in (("gamma_left", g_left), ("gamma_right", g_right)):
        if val < 0:
            fail("bath", key if lines.get(("bath", key)) else "delta_gamma",
                 f"{key} must be >= 0, got {val}")
    gamma_free = get("bath", "gamma_free", 0.0)
    if gamma_free < 0:
        fail("bath", "gamma_free", "gamma_free must be >= 0")
    phases = get("bath", "phases")
    try:
        bath = BathConfig(g_left, g_right, phases=phases, gamma_free=gamma_free)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    # drive: constant (omega) or ramp (m, t_f)
    omega = get("drive", "omega")
    slope = get("drive", "m")
    t_f = get("drive", "t_f")
    k = get("drive", "k", 10.0)
    try:
        if omega is not None and (slope is not None or t_f is not None):
            raise ValueError("give either omega (constant) or m and t_f (ramp), not both")
        if omega is not None:
            protocol = DriveProtocol.constant(omega, k=k)
        elif slope is not None:
            protocol = DriveProtocol.ramp(slope, t_f if t_f is not None else 1.0, k=k)
        else:
            protocol = DriveProtocol.constant(0.0, k=k)
    except ValueError as exc:
        raise ConfigError(str(exc), lines.get(("drive", "omega"))) from None

    mode_name = get("control", "mode", "none").lower()
    try:
        control = ControlMode(mode_name)
    except ValueError:
        fail("control", "mode",
             f"mode must be one of {[m.value for m in ControlMode]}, got '{mode_name}'")
    pairs_raw = get("control", "pairs", "adjacent")
    if pairs_raw == "all":
        pairing = PairingSpec.all_matchings()
    elif pairs_raw == "adjacent":
        if n_qubits % 2:
            fail("run", "n_qubits", "adjacent pairing needs an even n_qubits")
        pairing = PairingSpec.adjacent(n_qubits)
    else:
        try:
            pairs = []
            for chunk in pairs_raw.replace(",", " ").split():
                i, j = chunk.split("-")
                pairs.append((int(i), int(j)))
            pairing = PairingSpec.disjoint(pairs)
            pairing.validate(n_qubits)
        except (ValueError, IndexError) as exc:
            fail("control", "pairs", f"could not parse pairs '{pairs_raw}': {exc}")

    eta1 = get("noise", "eta1", 0.0)
    eta2 = get("noise", "eta2", 0.0)
    for key, val in (("eta1", eta1), ("eta2", eta2)):
        if val < 0:
            fail("noise", key, f"{key} must be >= 0")

    detunings = get("run", "detunings")
    if detunings is not None and len(detunings) != n_qubits:
        fail("run", "detunings", f"detunings needs {n_qubits} entries, got {len(detunings)}")

    return RunConfig(
        command=command,
        scenario=scenario,
        n_qubits=n_qubits,
        bath=bath,
        protocol=protocol,
        control=control,
        pairing=pairing,
        noise=NoiseConfig(eta_drive=eta1, eta_control=eta2),
        detunings=None if detunings is None else np.asarray(detunings, float),
        t_end=get("run", "t_end", 3.0),
        sample_dt=get("run", "sample_dt", 0.02),
        merge_dissipators=get("run", "merge_dissipators"),
        raw={sec: dict(entries) for sec, entries in values.items()},
    )


def emit_outputs(table: ResultTable, out_dir: str | Path, plot: bool = False) -> list[Path]:
    """Write <name>.csv, <name>_metadata.json and, when asked, <name>.svg."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out / f"{table.name}.csv"
    try:
        csv_path.write_text(table.to_csv())
    except OSError as exc:
        raise OSError(f"could not write {csv_path}: {exc}") from exc
    written.append(csv_path)
    meta_path = out / f"{table.name}_metadata.json"
    meta_path.write_text(json.dumps(table.metadata, indent=2, sort_keys=True) + "\n")
    written.append(meta_path)
    if plot:
        from .plotting import render_table

        svg_path = out / f"{table.name}.svg"
        render_table(table, str(svg_path))
        written.append(svg_path)
    return written


def read_result_csv(path: str | Path) -> tuple[list[str], list[tuple]]:
    """Parse a table written by emit_outputs; floats round-trip exactly."""
    lines = Path(path).read_text().strip().split("\n")
    columns = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        row = []
        for cell in line.split(","):
            if cell in ("true", "false"):
                row.append(cell == "true")
                continue
            try:
                row.append(int(cell))
            except ValueError:
                try:
                    row.append(float(cell))
                except ValueError:
                    row.append(cell)
        rows.append(tuple(row))
    return columns, rows


def _cmd_evolve(cfg: RunConfig, args) -> tuple[list[ResultTable], bool]:
    model = cfg.build_model()
    target = target_state(cfg.pairing, cfg.n_qubits)
    pairs = model.metric_pairs()
    cols = ["t", "fidelity_to_target", "global_purity"]
    for (i, j) in pairs:
        cols += [f"concurrence_{i}{j}", f"purity_{i}{j}"]
    table = ResultTable("evolve", cols, metadata={"engine_version": __version__, **cfg.raw})
    t_end = args.max_time or cfg.t_end

    def obs(t, rho):
        row = [float(t), fidelity_to_pure(rho, target), purity(rho)]
        for p in pairs:
            rp = partial_trace(rho, p)
            row += [concurrence(rp), purity(rp)]
        table.add(*row)

    g = ground_state(cfg.n_qubits)
    dt = args.dt or 1e-3
    evolve(
        model,
        np.outer(g, g.conj()),
        t_end,
        dt=dt,
        sample_every=max(1, int(round(cfg.sample_dt / dt))),
        observer=obs,
        store_states=False,
    )
    return [table], True


def _cmd_steady_state(cfg: RunConfig, args) -> tuple[list[ResultTable], bool]:
    model = cfg.build_model()
    target = target_state(cfg.pairing, cfg.n_qubits)
    table = ResultTable(
        "steady_state",
        ["pair", "concurrence", "fidelity_sqrt"],
        metadata={"engine_version": __version__, **cfg.raw},
    )
    ok = True
    if cfg.n_qubits <= 6:
        liou = build_liouvillian(model)
        try:
            result = steady_state(liou)
        except DegenerateSteadyStateError as exc:
            result = steady_state(liou, require_unique=False)
            table.metadata["null_dim"] = result.null_dim
            print(f"steady-state nullspace is degenerate ({exc.null_dim} dimensional)")
            return [table], False
        rho, residual = result.rho_ss, result.residual
        ok = residual < 1e-8 * model.gamma_total
        table.metadata["method"] = "nullspace"
    else:
        g = ground_state(cfg.n_qubits)
        rel = relax_constant(model, np.outer(g, g.conj()), t_start=model.constant_from(),
                             t_end=args.max_time or 200.0)
        rho, residual = rel.rho_final, float(rel.residuals[-1])
        ok = not rel.capped
        table.metadata["method"] = "long_time_integration"
        table.metadata["capped"] = bool(rel.capped)
    table.metadata["residual"] = residual
    table.metadata["fidelity_to_target"] = fidelity_to_pure(rho, target)
    from .experiments import _pair_observables

    cs, _, fs = _pair_observables(rho, model.metric_pairs())
    for (pair, c, f) in zip(model.metric_pairs(), cs, fs):
        table.add(f"{pair[0]}-{pair[1]}", c, f)
    print(f"steady state residual = {residual:.3e} (contract "
          f"{'met' if ok else 'NOT met'}); fidelity to target = "
          f"{table.metadata['fidelity_to_target']:.6f}")
    return [table], ok


def _cmd_gap(cfg: RunConfig, args) -> tuple[list[ResultTable], bool]:
    model = cfg.build_model()
    result = liouvillian_gap(build_liouvillian(model))
    table = ResultTable(
        "gap",
        ["index", "re", "im"],
        metadata={
            "engine_version": __version__,
            "gap": result.gap,
            "n_zero_modes": result.n_zero_modes,
            **cfg.raw,
        },
    )
    order = np.argsort(-np.real(result.eigenvalues))
    for idx, ev in enumerate(result.eigenvalues[order]):
        table.add(idx, float(np.real(ev)), float(np.imag(ev)))
    print(f"liouvillian gap = {result.gap:.6e} ({result.n_zero_modes} zero modes)")
    return [table], True


def _cmd_qsl(cfg: RunConfig, args) -> tuple[list[ResultTable], bool]:
    target = target_state(cfg.pairing, cfg.n_qubits)
    activity, bound = qsl_activity(target, cfg.bath.gamma_total)
    table = ResultTable(
        "qsl",
        ["activity", "time_bound"],
        metadata={"engine_version": __version__, **cfg.raw},
    )
    table.add(activity, bound if math.isfinite(bound) else float("inf"))
    print(f"speed-limit activity = {activity:.6e}, unnormalized bound = {bound:.6e}")
    return [table], True


def _cmd_reproduce(cfg: RunConfig, args) -> tuple[list[ResultTable], bool]:
    scfg = ScenarioConfig(
        scenario_id=cfg.scenario,
        dt=args.dt or 1e-3,
        max_time=args.max_time,
        threads=args.threads,
    )
    table = run_scenario(scfg)
    return [table], True


def _help_epilog() -> str:
    return (
        "Configuration format (units: rates in total-bath-rate units, times in its inverse):\n"
        "  [bath]    gamma_left/gamma_right OR gamma_total (default 1) + delta_gamma (default 0);\n"
        "            gamma_free (default 0); phases = comma list (default all 0)\n"
        "  [drive]   omega (constant mode) OR m + t_f (ramp mode); k (default 10)\n"
        "  [control] mode = none|approximate_generator|exact_generator|local_pauli|counterdiabatic\n"
        "            (default none); pairs = adjacent|all|'1-2,3-4' (default adjacent)\n"
        "  [noise]   eta1, eta2 (default 0)\n"
        "  [run]     command = evolve|steady-state|gap|qsl|reproduce (required);\n"
        "            n_qubits (default 2); scenario (for reproduce); detunings = comma list;\n"
        "            t_end (default 3); sample_dt (default 0.02); merge_dissipators = true/false\n"
        "CSV schemas: evolve -> t, fidelity_to_target, global_purity, concurrence_ij, purity_ij;\n"
        "  steady-state -> pair, concurrence, fidelity_sqrt; gap -> index, re, im;\n"
        "  qsl -> activity, time_bound; reproduce -> per-scenario schema documented in the README.\n"
        f"Scenarios: {', '.join(SCENARIO_IDS)}"
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dimersim",
        description="Driven-dissipative entangled-dimer preparation engine",
        epilog=_help_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", required=True, help="path to the INI configuration")
    parser.add_argument("--out", default="out", help="output directory (default: ./out)")
    parser.add_argument("--plot", action="store_true", help="also render SVG figures")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    parser.add_argument("--dt", type=float, default=None, help="integrator step override")
    parser.add_argument(
        "--max-time", type=float, default=None, help="time horizon override (units 1/gamma)"
    )
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    handlers = {
        "evolve": _cmd_evolve,
        "steady-state": _cmd_steady_state,
        "gap": _cmd_gap,
        "qsl": _cmd_qsl,
        "reproduce": _cmd_reproduce,
    }
    try:
        tables, ok = handlers[cfg.command](cfg, args)
    except (StabilityError, DegenerateSteadyStateError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for table in tables:
        paths = emit_outputs(table, args.out, plot=args.plot)
        for p in paths:
            print(f"wrote {p}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
