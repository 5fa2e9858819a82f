"""Command line pipelines: calibrate, simulate, analyze, report.

Exit codes: 0 success, 2 configuration or input error, 3 numerical or
protocol failure, 4 missing artifact.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    TimeTrace,
    fft_spectrum,
    fidelity_from_beta,
    fit_exponential_decay,
    fit_multifreq,
)
from .circuit import (
    Circuit,
    NoiseModel,
    STOSettings,
    TubeConfig,
    simulate_ensemble,
    simulate_shuttle_double_occupancy,
)
from .config import ExperimentConfig, dump_json, dump_toml, load_config
from .errors import ConfigError, MissingArtifactError, PumpkitError
from .gates import calibrate_gate, gate_angle
from .lattice import (
    LatticePotential,
    PumpSchedule,
    build_schedule,
    ground_orbital,
    orbital_double_occupancy,
    reduce_to_1d,
    solve_bloch,
    wannier_center_winding,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4


# --- file emission -------------------------------------------------------------


def provenance(config: ExperimentConfig) -> dict:
    return {"config_hash": config.digest(), "pumpkit_version": __version__, "seed": config.seed}


def write_json(path: Path, payload: dict, config: ExperimentConfig):
    data = {"provenance": provenance(config), **payload}
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_csv(path: Path, header, rows, config: ExperimentConfig, extra_meta: dict | None = None):
    buf = io.StringIO()
    meta = {**provenance(config), **(extra_meta or {})}
    for key in sorted(meta):
        buf.write(f"# {key}: {json.dumps(meta[key], sort_keys=True, default=_json_default)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    path.write_text(buf.getvalue())


def _outdir(config: ExperimentConfig) -> Path:
    out = config.resolve_path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- calibrate ---------------------------------------------------------------------


def _potential(config: ExperimentConfig, V_X: float | None = None) -> LatticePotential:
    depths = config.lattice.resolved()
    if V_X is not None:
        depths["V_X"] = V_X
    return LatticePotential(**depths)


def _pump(config: ExperimentConfig, period: float | None = None) -> PumpSchedule:
    return PumpSchedule(period or config.pump.T, config.pump.direction, n_samples=config.pump.n_samples)


def cmd_calibrate(config: ExperimentConfig) -> dict:
    """Schedule table, winding report and alpha calibration tables."""
    out = _outdir(config)
    pot = _potential(config)
    pump = _pump(config)
    sv = config.solver
    pump_on = config.pump.enabled and not reduce_to_1d(pot).is_static
    if not pump_on:
        winding = {"ground": 0.0, "excited": 0.0, "note": "pump off: static lattice, no transport"}
        write_json(out / "winding.json", winding, config)
        write_json(out / "gates.json", {"gates": [], "note": "pump off: no collisions, no gates calibrated"}, config)
        return {"winding": winding, "gates": []}

    schedule = build_schedule(pot, pump, config.hubbard.U, n_max=sv.n_max, nq=sv.nq)
    _write_schedule(out, schedule, config)

    w = wannier_center_winding(pot, pump, bands=(0, 1), n_phase=sv.n_phase, n_max=sv.n_max, nq=sv.nq)
    winding = {"ground": w[0], "excited": w[1], "units": "sites per pump period"}
    write_json(out / "winding.json", winding, config)

    cal = config.calibration
    T_grid = np.geomspace(*cal.T_range, cal.n_T)
    alpha_T = [gate_angle(schedule.with_period(T)).alpha for T in T_grid]
    write_csv(out / "alpha_vs_T.csv", ["T_s", "alpha"], zip(T_grid, alpha_T), config)

    cache = {}

    def family_vx(v):
        key = round(float(v), 12)
        if key not in cache:
            cache[key] = build_schedule(_potential(config, v), pump, config.hubbard.U, n_max=sv.n_max, nq=sv.nq)
        return cache[key]

    VX_grid = np.linspace(*cal.V_X_range, cal.n_V_X)
    alpha_V = [gate_angle(family_vx(v)).alpha for v in VX_grid]
    write_csv(out / "alpha_vs_VX.csv", ["V_X_Erec", "alpha"], zip(VX_grid, alpha_V), config, {"T_s": config.pump.T})

    gates = []
    for target in cal.targets:
        for knob, family, bracket in (
            ("T", schedule.with_period, cal.T_range),
            ("V_X", family_vx, cal.V_X_range),
        ):
            try:
                res = calibrate_gate(target, family, bracket, knob=knob)
                gates.append({"target": target, "knob": knob, "value": res.value, "alpha": res.alpha, "reachable": True})
            except PumpkitError as exc:
                span = getattr(exc, "span", None)
                gates.append({"target": target, "knob": knob, "reachable": False, "reason": str(exc), "span": span})
    write_json(out / "gates.json", {"gates": gates}, config)
    return {"winding": winding, "gates": gates, "schedule": schedule}


def _write_schedule(out: Path, schedule, config):
    write_csv(
        out / "schedule.csv",
        ["tau_over_T", "t_x_Erec", "t_x_prime_Erec", "Delta_Erec", "Jex_Erec"],
        schedule.rows(),
        config,
        {"recoil_hz": schedule.recoil_hz, "period_s": schedule.period},
    )
    write_json(
        out / "schedule.json",
        {
            "metadata": schedule.metadata,
            "tau": schedule.tau,
            "t_x": schedule.t_x,
            "t_x_prime": schedule.t_x_prime,
            "Delta": schedule.Delta,
            "Jex": schedule.Jex,
        },
        config,
    )


# --- simulate ----------------------------------------------------------------------


def _circuit(config: ExperimentConfig) -> Circuit:
    c = config.circuit
    if c.file:
        path = config.resolve_path(c.file)
        try:
            return Circuit.load(path)
        except FileNotFoundError:
            raise MissingArtifactError(f"circuit file {path} not found", missing=[str(path)]) from None
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"circuit.file: {path}: {exc}") from None
    return Circuit.uniform(c.layers, period=config.pump.T, direction=config.pump.direction)


def _sto(config: ExperimentConfig) -> STOSettings:
    s = config.sto
    return STOSettings.grid(s.base_frequency, s.periods, s.n_tau)


def shuttle_double_occupancies(config: ExperimentConfig) -> tuple[float, float]:
    """Ground-orbital double occupancy in the staggered and dimerised configurations."""
    pot = reduce_to_1d(_potential(config))
    pump = _pump(config)
    sv = config.solver
    d = {}
    for name, u in (("staggered", 0.25), ("dimerised", 0.0)):
        sol = solve_bloch(pot, float(pump.phase(u)), n_max=sv.n_max, nq=sv.nq, n_bands=3)
        d[name] = orbital_double_occupancy(ground_orbital(sol))
    return d["staggered"], d["dimerised"]


def cmd_simulate(config: ExperimentConfig) -> dict:
    out = _outdir(config)
    circuit = _circuit(config)
    e = config.ensemble
    tube = TubeConfig(e.L, e.filling, config.seed, e.boundary, e.margin, e.singles)
    noise = NoiseModel(config.noise.alpha_sigma, config.noise.survival)
    result = simulate_ensemble(tube, circuit, _sto(config), noise, e.n_tubes, e.engine)
    tr = result.trace
    write_csv(
        out / "trace.csv",
        ["tau_s", "value", "stderr"],
        zip(tr.tau, tr.value, tr.stderr),
        config,
        {"f1": config.sto.base_frequency, "engine": result.engine, "n_pairs": result.n_pairs,
         "boundary": e.boundary, "singles": e.singles},
    )
    hist = {
        "histogram": {str(k): v for k, v in (result.histogram or {}).items()},
        "available": result.histogram is not None,
        "n_pairs": result.n_pairs,
        "n_tubes": result.n_tubes,
        "engine": result.engine,
        "circuit": circuit.to_dict(),
        "policies": {"boundary": e.boundary, "singles": e.singles, "margin": e.margin},
    }
    write_json(out / "histogram.json", hist, config)
    payload = {"trace": tr, "histogram": result.histogram}
    if config.shuttle.enabled:
        sh = config.shuttle
        d_stag, d_dim = shuttle_double_occupancies(config)
        series = simulate_shuttle_double_occupancy(d_stag, d_dim, sh.fidelity, sh.n_cycles, sh.reversal)
        write_csv(
            out / "shuttle.csv",
            ["N_cycles", "D", "configuration", "direction"],
            zip(series.n, series.D, series.configuration, series.direction),
            config,
            {"d_staggered": d_stag, "d_dimerised": d_dim, "fidelity_in": sh.fidelity},
        )
        payload["shuttle"] = series
    return payload


# --- analyze -----------------------------------------------------------------------


def read_shuttle_csv(path: Path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#") or text.startswith("N_cycles"):
                continue
            cells = text.split(",")
            try:
                rows.append((float(cells[0]), float(cells[1]), cells[2]))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no samples found")
    return rows


def analyze_shuttle(rows) -> dict:
    fits = {}
    for name in ("staggered", "dimerised"):
        n = np.array([r[0] for r in rows if r[2] == name])
        d = np.array([r[1] for r in rows if r[2] == name])
        fit = fit_exponential_decay(n, d)
        fits[name] = {"beta": fit.beta, "beta_err": fit.beta_err, "D0": fit.D0}
    beta = 0.5 * (fits["staggered"]["beta"] + fits["dimerised"]["beta"])
    return {"fits": fits, "beta": beta, "fidelity": fidelity_from_beta(beta)}


def cmd_analyze(config: ExperimentConfig, inputs=None) -> dict:
    out = _outdir(config)
    trace_path = Path(inputs[0]) if inputs else out / "trace.csv"
    if not trace_path.exists():
        raise MissingArtifactError(f"trace file {trace_path} not found", missing=[str(trace_path)])
    trace = TimeTrace.from_csv(trace_path)
    f1 = float(trace.metadata.get("f1", config.sto.base_frequency))
    fit = fit_multifreq(trace, f1, config.sto.s_max)
    spec = fft_spectrum(trace, f1)
    write_json(out / "fit.json", {"source": trace_path.name, "fit": fit.to_dict()}, config)
    write_csv(out / "amplitudes.csv", ["s", "A_s", "sigma_A_s"], fit.amplitude_rows(), config, {"f1": f1})
    write_csv(
        out / "spectrum.csv",
        ["freq_hz", "freq_f1", "magnitude"],
        zip(spec.freq_hz, spec.freq_f1, spec.magnitude),
        config,
        {"parseval_error": spec.parseval_error, **spec.metadata},
    )
    payload = {"fit": fit, "spectrum": spec}
    shuttle_path = Path(inputs[1]) if inputs and len(inputs) > 1 else out / "shuttle.csv"
    if shuttle_path.exists():
        result = analyze_shuttle(read_shuttle_csv(shuttle_path))
        write_json(out / "fidelity.json", result, config)
        payload["fidelity"] = result
    return payload


# --- report ------------------------------------------------------------------------


def _load(path: Path):
    return json.loads(path.read_text()) if path.exists() else None


def cmd_report(config: ExperimentConfig) -> dict:
    out = config.resolve_path(config.output)
    names = ["winding.json", "gates.json", "histogram.json", "fit.json", "fidelity.json", "trace.csv", "schedule.csv"]
    present = {n: (out / n).exists() for n in names}
    if not out.is_dir() or not any(present.values()):
        raise MissingArtifactError(f"no run artifacts in {out}", missing=names)
    missing = [n for n, ok in present.items() if not ok]
    winding = _load(out / "winding.json")
    gates = _load(out / "gates.json")
    hist = _load(out / "histogram.json")
    fit = _load(out / "fit.json")
    fidelity = _load(out / "fidelity.json")

    comparison = None
    if hist and hist.get("available") and fit:
        amps = np.array(fit["fit"]["amplitudes"])
        total = amps.sum()
        weights = {str(s): float(a / total) if total > 0 else 0.0 for s, a in enumerate(amps, start=1)}
        comparison = [
            {"s": int(s), "histogram": hist["histogram"].get(s, 0.0), "fit_weight": weights.get(s, 0.0)}
            for s in sorted(set(hist["histogram"]) | set(weights), key=int)
        ]

    flags = {}
    if winding is not None:
        flags["quantized_transport"] = (
            "note" in winding
            or (abs(winding["ground"] - 2) < 1e-3 and abs(winding["excited"] + 2) < 1e-3)
        )
    if gates is not None:
        ok = [g for g in gates["gates"] if g.get("reachable")]
        flags["gate_calibration"] = all(abs(g["alpha"] - g["target"]) < 1e-4 for g in ok)
    if comparison is not None:
        flags["histogram_fit_consistency"] = all(
            abs(row["histogram"] - row["fit_weight"]) < 0.02 for row in comparison
        )
    if fidelity is not None:
        flags["fidelity_loop"] = abs(fidelity["fidelity"] - config.shuttle.fidelity) < 5e-4

    report = {
        "config": config.to_dict(),
        "winding": winding or "absent",
        "gates": gates["gates"] if gates else "absent",
        "histogram_vs_fit": comparison if comparison is not None else "absent",
        "fidelity": fidelity or "absent",
        "acceptance_flags": flags,
        "missing_artifacts": missing,
    }
    write_json(out / "report.json", report, config)
    (out / "report.md").write_text(_markdown(report, config))
    return report


def _markdown(report: dict, config: ExperimentConfig) -> str:
    lines = ["# Run report", "", f"config hash `{config.digest()}`, pumpkit {__version__}, seed {config.seed}", ""]
    lines.append("## Acceptance flags")
    for k, v in sorted(report["acceptance_flags"].items()):
        lines.append(f"- {k}: {'pass' if v else 'FAIL'}")
    lines += ["", "## Winding"]
    w = report["winding"]
    lines.append("absent" if w == "absent" else f"ground {w['ground']:+.4f}, excited {w['excited']:+.4f} sites/period")
    lines += ["", "## Histogram versus fit", ""]
    if report["histogram_vs_fit"] == "absent":
        lines.append("absent")
    else:
        lines += ["| s | histogram | fit weight |", "|---|---|---|"]
        for row in report["histogram_vs_fit"]:
            lines.append(f"| {row['s']} | {row['histogram']:.4f} | {row['fit_weight']:.4f} |")
    if report["missing_artifacts"]:
        lines += ["", "## Missing artifacts", *[f"- {n}" for n in report["missing_artifacts"]]]
    return "\n".join(lines) + "\n"


# --- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pumpkit", description="Pumped-atom circuit simulation pipelines")
    parser.add_argument("--version", action="version", version=f"pumpkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("calibrate", "simulate", "analyze", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML or JSON experiment config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        if name == "analyze":
            p.add_argument("inputs", nargs="*", help="trace CSV and optional shuttle CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config).with_overrides(args.seed, args.out)
        out = _outdir(config) if args.command != "report" else None
        if out is not None:
            (out / "config.toml").write_text(dump_toml(config))
            (out / "config.json").write_text(dump_json(config) + "\n")
        if args.command == "calibrate":
            cmd_calibrate(config)
        elif args.command == "simulate":
            cmd_simulate(config)
        elif args.command == "analyze":
            cmd_analyze(config, args.inputs)
        else:
            cmd_report(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        for name in exc.missing:
            print(f"  missing: {name}", file=sys.stderr)
        return EXIT_MISSING
    except PumpkitError as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
