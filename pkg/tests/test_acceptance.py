"""Acceptance criteria, one marked group per criterion.

A pass/fail line per criterion is printed in the terminal summary.  Set
PUMPKIT_REGEN_GOLDEN=1 to rewrite the frozen circuit-phenomenology values.
"""

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from pumpkit.analysis import (
    TimeTrace,
    eq_model,
    fft_spectrum,
    fidelity_from_beta,
    fit_base_frequency,
    fit_exponential_decay,
    fit_multifreq,
    fit_single_sine,
)
from pumpkit.circuit import (
    Circuit,
    STOSettings,
    TubeConfig,
    engines_agree,
    run_tube,
    simulate_ensemble,
    simulate_shuttle_double_occupancy,
)
from pumpkit.gates import DoubleWellParams, calibrate_gate, gate_angle, jex_exact, jex_perturbative, swap_alpha_unitary
from pumpkit.lattice import (
    PumpSchedule,
    build_schedule,
    ground_orbital,
    orbital_double_occupancy,
    reduce_to_1d,
    solve_bloch,
    table_potential,
    wannier_center_winding,
)

F1 = 216.5
GOLDEN = Path(__file__).parent / "golden" / "fig4_circuits.json"


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


# --- 1 ---------------------------------------------------------------------------------


@pytest.mark.acceptance(1, "gate algebra of (SWAP)^alpha")
def test_gate_algebra():
    with Timer() as t:
        u = swap_alpha_unitary
        np.testing.assert_allclose(u(0.5) @ u(0.5), u(1), atol=1e-12)
        np.testing.assert_allclose(u(1) @ u(1), u(2), atol=1e-12)
        np.testing.assert_allclose(u(2), np.eye(4), atol=1e-12)
        rng = np.random.default_rng(1)
        for a, b in rng.uniform(-4, 4, size=(100, 2)):
            np.testing.assert_allclose(u(a) @ u(b), u(a + b), atol=1e-12)
    assert t.elapsed < 1.0


# --- 2 ---------------------------------------------------------------------------------


def _oracle_gap(t, d, u):
    h = np.array([[u + 2 * d, -t, t, 0], [-t, 0, 0, -t], [t, 0, 0, t], [0, -t, t, u - 2 * d]], dtype=float)
    e = np.sort(np.linalg.eigvals(h).real)
    return e[1] - e[0]


@pytest.mark.acceptance(2, "superexchange exact versus perturbative")
def test_superexchange():
    with Timer() as t:
        exact = jex_exact(DoubleWellParams(1.0, 0.0, 10.0))
        assert exact == pytest.approx((math.sqrt(116) - 10) / 2, abs=1e-10)
        assert exact == pytest.approx(_oracle_gap(1.0, 0.0, 10.0), abs=1e-10)
        assert jex_perturbative(DoubleWellParams(1.0, 0.0, 10.0)) == 0.4
        dev = lambda u: abs(jex_perturbative(DoubleWellParams(1, 0, u)) / jex_exact(DoubleWellParams(1, 0, u)) - 1)
        assert dev(100.0) < 0.01
        devs = [dev(u) for u in np.geomspace(10, 1000, 25)]
        assert np.all(np.diff(devs) < 0)
    assert t.elapsed < 1.0


# --- 3 ---------------------------------------------------------------------------------


@pytest.mark.acceptance(3, "quantised transport of +2 / -2 sites per period")
def test_quantised_transport():
    with Timer() as t:
        w = wannier_center_winding(table_potential("fig3"), PumpSchedule(1e-3), bands=(0, 1))
    print(f"winding: ground {w[0]:+.6f}, excited {w[1]:+.6f} sites/period")
    assert abs(w[0] - 2) < 1e-3
    assert abs(w[1] + 2) < 1e-3
    assert t.elapsed < 60


# --- 4 ---------------------------------------------------------------------------------


@pytest.mark.acceptance(4, "separation law s = 2N + 1 and base-frequency slope")
def test_separation_law():
    with Timer() as t:
        sto = STOSettings.grid(F1, 2.0, 200)
        points = []
        for depth in range(10):
            for filling, seed in ((0.3, 1), (0.65, 2), (1.0, 3)):
                res = simulate_ensemble(
                    TubeConfig(L=60, filling=filling, margin=2 * depth, seed=seed),
                    Circuit.uniform([1] * depth),
                    sto,
                    n_tubes=3,
                )
                assert res.histogram == {2 * depth + 1: 1.0}
            fit = fit_single_sine(res.trace)
            s = 2 * depth + 1
            assert abs(fit.frequency - s * F1) <= max(3 * fit.frequency_err, 1e-9 * s * F1)
            points.append((depth, fit.frequency))
        slope = fit_base_frequency(points)
    assert slope.f1 == pytest.approx(F1, rel=0.005)
    assert t.elapsed < 60


# --- 5 ---------------------------------------------------------------------------------

FIG4 = {
    "a": [1, 2, 1, 1, 1],
    "b": [1, 1, 2, 2, 1],
    "c": [2, 2, 2, 2, 2],
}


def _fig4_run(pattern):
    sto = STOSettings.grid(F1, 2.0, 200)
    res = simulate_ensemble(
        TubeConfig(L=80, filling=0.65, margin=10, seed=2024), Circuit.uniform(pattern), sto, n_tubes=2000
    )
    fit = fit_multifreq(res.trace, F1)
    return res, fit


@pytest.fixture(scope="module")
def fig4():
    with Timer() as t:
        runs = {k: _fig4_run(p) for k, p in FIG4.items()}
    assert t.elapsed < 300
    frozen = {
        k: {
            "histogram": {str(s): w for s, w in res.histogram.items()},
            "fit_weights": {str(s): w for s, w in fit.weights().items()},
            "n_pairs": res.n_pairs,
        }
        for k, (res, fit) in runs.items()
    }
    if os.environ.get("PUMPKIT_REGEN_GOLDEN") or not GOLDEN.exists():
        GOLDEN.write_text(json.dumps(frozen, indent=2, sort_keys=True) + "\n")
    for k, (res, fit) in runs.items():
        ranked = sorted(res.histogram.items(), key=lambda kv: -kv[1])
        print(f"circuit {k} {FIG4[k]}: " + ", ".join(f"s={s}:{w:.3f}" for s, w in ranked[:6]))
    return runs, frozen


def _ranked(weights):
    return [s for s, _ in sorted(weights.items(), key=lambda kv: -kv[1])]


@pytest.mark.acceptance(5, "circuit phenomenology of the three depth-5 circuits")
def test_fig4_golden(fig4):
    _, frozen = fig4
    golden = json.loads(GOLDEN.read_text())
    for k in FIG4:
        assert frozen[k]["n_pairs"] == golden[k]["n_pairs"]
        for s, w in golden[k]["histogram"].items():
            assert frozen[k]["histogram"][s] == pytest.approx(w, abs=1e-12)
        for s, w in golden[k]["fit_weights"].items():
            assert frozen[k]["fit_weights"][s] == pytest.approx(w, abs=1e-6)


@pytest.mark.acceptance(5, "circuit phenomenology of the three depth-5 circuits")
def test_fig4a_single_reflection(fig4):
    res, fit = fig4[0]["a"]
    hist = res.histogram
    assert hist.get(3, 0.0) < hist[4]
    assert fit.amplitude(3) < fit.amplitude(4)
    # the two largest components must be s = 4 and s = 11
    assert set(_ranked(hist)[:2]) == {4, 11}
    assert set(fit.dominant(2)) == {4, 11}


@pytest.mark.acceptance(5, "circuit phenomenology of the three depth-5 circuits")
def test_fig4b_two_reflection_layers(fig4):
    res, fit = fig4[0]["b"]
    # "two major contributions" at s = 6 and s = 8: both within the top three
    assert {6, 8} <= set(_ranked(res.histogram)[:3])
    assert {6, 8} <= set(fit.dominant(3))


@pytest.mark.acceptance(5, "circuit phenomenology of the three depth-5 circuits")
def test_fig4c_all_reflections(fig4):
    res, fit = fig4[0]["c"]
    assert sum(w for s, w in res.histogram.items() if s <= 4) >= 0.70
    assert sum(w for s, w in fit.weights().items() if s <= 4) >= 0.70
    tr = res.trace
    k = int(np.argmin(np.abs(tr.tau - 1 / F1)))
    assert tr.tau[k] == pytest.approx(1 / F1, rel=1e-12)
    first = tr.tau < 1 / F1
    floor = tr.value[first].min()
    assert tr.value[k] - floor > 0.8 * (tr.value[0] - floor)


# --- 6 ---------------------------------------------------------------------------------


@pytest.mark.acceptance(6, "pair and state-vector engines agree on integer circuits")
def test_engine_equivalence():
    rng = np.random.default_rng(6)
    sto = STOSettings.grid(F1, 2.0, 40)
    with Timer() as t:
        checked = 0
        for _ in range(50):
            depth = int(rng.integers(0, 6))
            layers = rng.integers(0, 4, size=depth)
            config = TubeConfig(L=12, filling=float(rng.uniform(0.3, 1.0)), seed=int(rng.integers(1 << 31)))
            report = engines_agree(config, Circuit.uniform(layers), sto, tol=1e-10)
            assert report["max_deviation"] < 1e-10
            checked += report["n_pairs"] > 0
    assert checked >= 40
    assert t.elapsed < 120


# --- 7 ---------------------------------------------------------------------------------


@pytest.mark.acceptance(7, "interferometer closure at zero hold time")
@pytest.mark.parametrize("engine", ["pair", "statevector"])
def test_closure(engine):
    rng = np.random.default_rng(7)
    for trial in range(20):
        depth = int(rng.integers(0, 8))
        if engine == "pair":
            layers = rng.integers(0, 4, size=depth).astype(float)
            config = TubeConfig(L=40, filling=float(rng.uniform(0.2, 1.0)), seed=trial)
        else:
            layers = rng.uniform(0, 4, size=depth)
            config = TubeConfig(L=14, filling=float(rng.uniform(0.2, 1.0)), seed=trial)
        frac, _, state = run_tube(config, Circuit.uniform(layers), STOSettings(F1, (0.0,)), engine=engine)
        np.testing.assert_array_equal(state.positions, state.initial_positions)
        if frac is not None:
            assert frac[0] == pytest.approx(1.0, abs=1e-12)


# --- 8 ---------------------------------------------------------------------------------


@pytest.mark.acceptance(8, "shuttle fidelity loop recovers F = 0.9978")
def test_fidelity_loop():
    with Timer() as t:
        pot = reduce_to_1d(table_potential("fig2bc"))
        pump = PumpSchedule(1e-3)
        d = {
            name: orbital_double_occupancy(ground_orbital(solve_bloch(pot, float(pump.phase(u)), nq=16, n_bands=3)))
            for name, u in (("staggered", 0.25), ("dimerised", 0.0))
        }
        series = simulate_shuttle_double_occupancy(d["staggered"], d["dimerised"], 0.9978, 100, reversal=50)
        betas = [fit_exponential_decay(*series.curve(c)).beta for c in ("staggered", "dimerised")]
        fidelity = fidelity_from_beta(float(np.mean(betas)))
    print(f"D staggered {d['staggered']:.4f}, dimerised {d['dimerised']:.4f}, recovered F {fidelity:.6f}")
    assert abs(fidelity - 0.9978) <= 5e-4
    assert t.elapsed < 10


# --- 9 ---------------------------------------------------------------------------------


@pytest.mark.acceptance(9, "multi-frequency fit and FFT recovery on synthetic traces")
def test_fit_recovery():
    rng = np.random.default_rng(9)
    tau = np.arange(400) * 3.0 / (F1 * 400)
    with Timer() as t:
        for _ in range(12):
            k = int(rng.integers(1, 5))
            comps = rng.choice(np.arange(1, 13), size=k, replace=False)
            amps = np.zeros(12)
            phases = np.zeros(12)
            amps[comps - 1] = rng.uniform(0.1, 0.25, size=k)
            phases[comps - 1] = rng.uniform(-np.pi, np.pi, size=k)
            gamma = float(rng.uniform(10, 100))
            y = eq_model(tau, F1, amps, phases, gamma, 0.5) + 0.01 * rng.standard_normal(tau.size)
            trace = TimeTrace(tau, y)
            fit = fit_multifreq(trace, F1)
            for s in comps:
                assert fit.amplitude(s) == pytest.approx(amps[s - 1], rel=0.05)
                assert abs(math.remainder(fit.phases[s - 1] - phases[s - 1], 2 * math.pi)) < 0.1
            spec = fft_spectrum(trace, F1)
            assert set(spec.dominant(k)) == set(comps.tolist())
            mag = spec.magnitude.copy()
            mag[0] = 0
            peaks = np.argsort(mag)[::-1][:k]
            np.testing.assert_allclose(spec.freq_f1[peaks], np.round(spec.freq_f1[peaks]), atol=1e-9)
    assert t.elapsed < 30


# --- 10 --------------------------------------------------------------------------------


@pytest.mark.acceptance(10, "gate calibration curves and root finding")
def test_calibration_curves():
    pump = PumpSchedule(1.2e-3, n_samples=64)
    base = build_schedule(table_potential("fig2f"), pump, 1.5, nq=16)
    periods = np.linspace(2e-4, 5e-3, 12)
    alphas = np.array([gate_angle(base.with_period(T)).alpha for T in periods])
    slope, intercept = np.polyfit(periods, alphas, 1)
    resid = alphas - (slope * periods + intercept)
    r2 = 1 - resid @ resid / np.sum((alphas - alphas.mean()) ** 2)
    assert r2 > 1 - 1e-6

    cache = {}

    def family(v):
        key = round(float(v), 12)
        if key not in cache:
            cache[key] = build_schedule(table_potential("fig2g", V_X=float(v)), pump, 1.5, nq=16)
        return cache[key]

    depths = np.linspace(4.5, 8.4, 9)
    scan = np.array([gate_angle(family(v)).alpha for v in depths])
    print("alpha(V_X) at T = 1.2 ms: " + ", ".join(f"{v:.2f}:{a:.3f}" for v, a in zip(depths, scan)))
    assert np.all(np.diff(scan) < 0)

    for target in (0.5, 1.0, 1.5, 2.0):
        by_period = calibrate_gate(target, base.with_period, (2e-4, 5e-3), knob="T")
        assert abs(by_period.alpha - target) < 1e-4
        by_depth = calibrate_gate(target, family, (4.5, 8.4), knob="V_X")
        assert abs(by_depth.alpha - target) < 1e-4
        assert abs(gate_angle(family(by_depth.value)).alpha - target) < 1e-4
