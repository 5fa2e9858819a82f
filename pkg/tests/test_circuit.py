import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from pumpkit.analysis import fit_single_sine
from pumpkit.circuit import (
    Circuit,
    Layer,
    NoiseModel,
    STOSettings,
    TubeConfig,
    apply_gradient,
    engines_agree,
    init_tube,
    measure_singlet_fraction,
    run_forward,
    run_reverse,
    run_tube,
    simulate_ensemble,
    simulate_shuttle_double_occupancy,
    step_cycle,
)
from pumpkit.errors import InvariantViolation, ProtocolOrderError, UnsupportedCircuitError
from pumpkit.gates import SINGLET, evolve_two_spin, rotation, singlet_probability

F1 = 216.5


def separations(config, circuit):
    state = init_tube(config)
    return [s for *_, s in run_forward(state, circuit).separations]


def single_pair():
    """Exactly one pair in the middle of an otherwise empty tube."""
    return TubeConfig(L=42, filling=1.0, margin=20, seed=0)


class TestConfigAndInit:
    def test_full_filling(self):
        state = init_tube(TubeConfig(L=8, filling=1.0, seed=1))
        assert state.n_pairs == 4 and state.n_atoms == 8
        np.testing.assert_array_equal(state.positions, np.arange(8))
        np.testing.assert_array_equal(state.chirality, [-1, 1] * 4)

    def test_empty_tube(self):
        state = init_tube(TubeConfig(L=8, filling=0.0, seed=1))
        run_forward(state, Circuit.uniform([1, 1]))
        apply_gradient(state, STOSettings(taus=(0.0,)))
        run_reverse(state)
        assert measure_singlet_fraction(state) is None

    def test_mean_filling(self):
        counts = [init_tube(TubeConfig(L=40, filling=0.65, seed=s)).n_pairs for s in range(400)]
        assert np.mean(counts) / 20 == pytest.approx(0.65, abs=4 * math.sqrt(0.65 * 0.35 / 8000))

    def test_margin_leaves_edges_empty(self):
        state = init_tube(TubeConfig(L=20, filling=1.0, margin=4, seed=0))
        assert state.positions.min() == 4 and state.positions.max() == 15

    def test_singles_optional(self):
        state = init_tube(TubeConfig(L=200, filling=0.5, singles=1.0, seed=3))
        assert np.any(state.pair_id == -1)
        assert not np.any(init_tube(TubeConfig(L=200, filling=0.5, seed=3)).pair_id == -1)

    @pytest.mark.parametrize("kw", [dict(L=7), dict(L=8, margin=3), dict(L=8, filling=1.5), dict(L=8, boundary="wrap")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TubeConfig(**kw)


class TestStep:
    @pytest.mark.parametrize("alpha", [0.0, 1.0, 2.0, 3.0])
    def test_lone_pair_separates_to_three(self, alpha):
        assert separations(single_pair(), Circuit.uniform([alpha])) == [3]

    def test_all_swap_depth_three(self):
        seps = separations(TubeConfig(L=60, filling=0.65, margin=6, seed=4), Circuit.uniform([1, 1, 1]))
        assert seps and set(seps) == {7}

    def test_reflection_layer_at_full_filling(self):
        state = init_tube(TubeConfig(L=12, filling=1.0, seed=0))
        before = state.positions.copy()
        groups = {k: list(v[0]) for k, v in state.spins.groups.items()}
        step_cycle(state, Layer(2.0))  # cycle 1: inter-cell bonds, edges hold
        step_cycle(state, Layer(2.0))
        np.testing.assert_array_equal(state.positions, before)
        assert {k: v[0] for k, v in state.spins.groups.items()} == groups

    @pytest.mark.parametrize("boundary,flipped", [("hold", False), ("mirror", True)])
    def test_boundary_policy(self, boundary, flipped):
        state = init_tube(TubeConfig(L=4, filling=1.0, boundary=boundary, seed=0))
        step_cycle(state, Layer(1.0))
        assert state.positions[0] == 0
        assert (state.chirality[0] == 1) == flipped

    def test_occupancy_trap(self):
        state = init_tube(TubeConfig(L=8, filling=1.0, seed=0))
        state.positions[1] = 0
        with pytest.raises(InvariantViolation):
            step_cycle(state, Layer(1.0))

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 10**6),
        layers=st.lists(st.sampled_from([0.0, 1.0, 2.0, 3.0]), min_size=1, max_size=10),
        filling=st.floats(0.0, 1.0),
        boundary=st.sampled_from(["hold", "mirror"]),
    )
    def test_occupancy_and_order(self, seed, layers, filling, boundary):
        state = init_tube(TubeConfig(L=30, filling=filling, boundary=boundary, seed=seed))
        order = list(state.label_order())
        n = state.n_atoms
        for a in layers:
            step_cycle(state, Layer(a))
            state.occupancy()
            assert list(state.label_order()) == order
            assert state.n_atoms == n and state.alive.all()


class TestForward:
    def test_depth_zero(self):
        assert set(separations(TubeConfig(L=40, filling=0.7, seed=2), Circuit())) == {1}

    @settings(max_examples=20, deadline=None)
    @given(depth=st.integers(0, 9), seed=st.integers(0, 10**6), filling=st.floats(0.05, 1.0))
    def test_all_swap_law(self, depth, seed, filling):
        config = TubeConfig(L=60, filling=filling, margin=2 * depth, seed=seed)
        seps = separations(config, Circuit.uniform([1] * depth))
        assert set(seps) <= {2 * depth + 1}

    def test_single_reflection_beats_double(self):
        res = simulate_ensemble(
            TubeConfig(L=60, filling=0.65, margin=10, seed=9),
            Circuit.uniform([1, 2, 1, 1, 1]),
            STOSettings(taus=(0.0,)),
            n_tubes=300,
        )
        assert res.histogram[4] > res.histogram[3] > 0

    def test_protocol_order(self):
        state = init_tube(TubeConfig(L=8, filling=1.0, seed=0))
        with pytest.raises(ProtocolOrderError):
            apply_gradient(state, STOSettings())
        with pytest.raises(ProtocolOrderError):
            run_reverse(state)
        with pytest.raises(ProtocolOrderError):
            measure_singlet_fraction(state)
        run_forward(state, Circuit.uniform([1]))
        with pytest.raises(ProtocolOrderError):
            run_forward(state, Circuit.uniform([1]))


class TestCircuitFiles:
    def test_round_trip(self, tmp_path):
        c = Circuit((Layer(1.0), Layer(2.0, {5: 0.5})), period=1e-3, direction=-1)
        c.dump(tmp_path / "c.json")
        assert Circuit.load(tmp_path / "c.json") == c

    def test_depth_mismatch(self):
        with pytest.raises(ValueError):
            Circuit.from_dict({"depth": 3, "layers": [{"alpha": 1}]})

    def test_per_bond_override(self):
        # one pair; its first collision-free crossing ignores alpha, so use two neighbouring pairs
        c = Circuit((Layer(1.0, {3: 2.0}),))
        state = init_tube(TubeConfig(L=8, filling=1.0, seed=0))
        step_cycle(state, c.layers[0])
        # bond (3, 4) reflects, bonds (1, 2) and (5, 6) swap
        groups = sorted(tuple(v[0]) for v in state.spins.groups.values())
        assert groups == [(0, 2), (1, 3), (4, 6), (5, 7)]


class TestGradientAndReverse:
    @pytest.mark.parametrize(
        "alphas", [[], [1], [2, 1], [0.5, 1.5], [1, 2, 1, 1, 1], [0.3, 0.7, 1.1]]
    )
    def test_closure(self, alphas):
        config = TubeConfig(L=16, filling=0.8, margin=2 * ((len(alphas) + 1) // 2), seed=11)
        frac, _, state = run_tube(config, Circuit.uniform(alphas), STOSettings(taus=(0.0,)))
        assert frac is None or frac[0] == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_array_equal(state.positions, state.initial_positions)

    @pytest.mark.parametrize("depth", [0, 1, 3])
    def test_all_swap_closed_form(self, depth):
        sto = STOSettings.grid(F1, 1.0, 37)
        config = TubeConfig(L=40, filling=0.7, margin=2 * depth, seed=5)
        frac, _, _ = run_tube(config, Circuit.uniform([1] * depth), sto)
        s = 2 * depth + 1
        oracle = [singlet_probability(evolve_two_spin(SINGLET, "sto", s * F1, t)) for t in sto.taus]
        np.testing.assert_allclose(frac, oracle, atol=1e-12)

    def test_half_period_converts_to_triplet(self):
        frac, _, _ = run_tube(single_pair(), Circuit(), STOSettings(F1, (0.0, 1 / (4 * F1), 1 / (2 * F1))))
        np.testing.assert_allclose(frac, [1.0, 0.5, 0.0], atol=1e-12)

    def test_separation_seven_frequency(self):
        sto = STOSettings.grid(F1, 2.0, 200)
        frac, _, _ = run_tube(single_pair(), Circuit.uniform([1, 1, 1]), sto)
        from pumpkit.analysis import TimeTrace

        fit = fit_single_sine(TimeTrace(np.array(sto.taus), frac))
        assert fit.frequency == pytest.approx(1515.5, rel=1e-9)

    def test_gradient_linearity(self):
        config = TubeConfig(L=40, filling=0.65, margin=6, seed=21)
        circuit = Circuit.uniform([1, 2, 1])
        taus = np.linspace(0, 4e-3, 41)
        slow, _, _ = run_tube(config, circuit, STOSettings(F1, tuple(2 * taus)))
        fast, _, _ = run_tube(config, circuit, STOSettings(2 * F1, tuple(taus)))
        np.testing.assert_allclose(fast, slow, atol=1e-12)

    def test_reference_point_cancels(self):
        config = TubeConfig(L=40, filling=0.65, margin=6, seed=21)
        sto = STOSettings.grid(F1, 1.0, 25)
        a, _, _ = run_tube(config, Circuit.uniform([1, 2, 1]), sto)
        b, _, _ = run_tube(TubeConfig(L=40, filling=0.65, margin=6, seed=21), Circuit.uniform([1, 2, 1]), sto,
                           engine="statevector")
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestEngines:
    def test_non_integer_needs_statevector(self):
        with pytest.raises(UnsupportedCircuitError):
            run_tube(TubeConfig(L=8, filling=1.0, seed=0), Circuit.uniform([0.5]), STOSettings(), engine="pair")

    def test_statevector_size_limit(self):
        with pytest.raises(UnsupportedCircuitError):
            init_tube(TubeConfig(L=40, filling=1.0, seed=0), engine="statevector")

    @settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(
        seed=st.integers(0, 10**6),
        layers=st.lists(st.integers(0, 3), min_size=0, max_size=5),
        filling=st.floats(0.2, 1.0),
    )
    def test_agree_on_integer_circuits(self, seed, layers, filling):
        config = TubeConfig(L=12, filling=filling, seed=seed)
        report = engines_agree(config, Circuit.uniform(layers), STOSettings.grid(F1, 1.0, 16))
        assert report["agree"]

    def test_unitarity(self):
        state = init_tube(TubeConfig(L=14, filling=1.0, seed=0), engine="statevector")
        rng = np.random.default_rng(1)
        for a in rng.uniform(0, 4, 10):
            step_cycle(state, Layer(float(a)))
        assert abs(state.spins.norm()[0] - 1) < 1e-10

    @pytest.mark.parametrize("axis", ["x", "y", "z"])
    def test_global_rotation_invariance(self, axis):
        config = TubeConfig(L=12, filling=0.8, seed=4)
        circuit = Circuit.uniform([0.5, 1.3, 2.2])
        sto = STOSettings(taus=(0.0,))
        ref, _, _ = run_tube(config, circuit, sto, engine="statevector")
        state = init_tube(config, "statevector")
        r = rotation(axis, 0.83)
        for q in range(state.n_atoms):
            state.spins.apply_single(r, q)
        run_forward(state, circuit)
        apply_gradient(state, sto)
        run_reverse(state)
        np.testing.assert_allclose(measure_singlet_fraction(state), ref, atol=1e-10)


class TestNoise:
    def test_alpha_jitter_reduces_contrast(self):
        config = TubeConfig(L=12, filling=0.65, margin=2, seed=8)
        sto = STOSettings.grid(F1, 1.0, 24)
        contrast = []
        for sigma in (0.0, 0.15, 0.4):
            res = simulate_ensemble(config, Circuit.uniform([1, 1]), sto, NoiseModel(alpha_sigma=sigma), n_tubes=150)
            contrast.append(np.ptp(res.trace.value))
        assert contrast[0] == pytest.approx(1.0, abs=1e-12)
        assert contrast[0] > contrast[1] > contrast[2]

    def test_loss_scales_singlet_fraction(self):
        p, depth = 0.95, 3
        res = simulate_ensemble(
            TubeConfig(L=60, filling=0.65, margin=6, seed=13),
            Circuit.uniform([1] * depth),
            STOSettings(taus=(0.0,)),
            NoiseModel(survival=p),
            n_tubes=200,
        )
        # a pair needs both atoms through 2 * depth cycles; a missing collision
        # partner additionally leaves other spins unswapped, so this is a bound
        assert 0 < res.trace.value[0] < p ** (4 * depth)

    def test_loss_with_reflections_only(self):
        # (SWAP)^2 never relabels spins, so only the pair's own atoms matter
        p, depth = 0.95, 3
        res = simulate_ensemble(
            TubeConfig(L=60, filling=0.65, margin=6, seed=13),
            Circuit.uniform([2] * depth),
            STOSettings(taus=(0.0,)),
            NoiseModel(survival=p),
            n_tubes=200,
        )
        assert res.trace.value[0] == pytest.approx(p ** (4 * depth), abs=4 * res.trace.stderr[0])

    def test_ensemble_deterministic(self):
        args = (TubeConfig(L=40, filling=0.65, margin=6, seed=99), Circuit.uniform([1, 2, 1]), STOSettings.grid())
        a = simulate_ensemble(*args, n_tubes=10)
        b = simulate_ensemble(*args, n_tubes=10)
        np.testing.assert_array_equal(a.trace.value, b.trace.value)
        assert a.histogram == b.histogram


class TestShuttle:
    def test_no_decay(self):
        series = simulate_shuttle_double_occupancy(0.99, 0.5, 1.0, 4)
        np.testing.assert_allclose(series.D, [0.99, 0.5] * 4 + [0.99])

    def test_initial_value(self):
        assert simulate_shuttle_double_occupancy(0.9, 0.5, 0.9978, 10, d0=0.8).D[0] == pytest.approx(0.72)

    def test_envelope(self):
        f = 0.9978
        series = simulate_shuttle_double_occupancy(1.0, 0.5, f, 50, reversal=25)
        n, d = series.curve("staggered")
        beta = -1 / (2 * math.log(f))
        np.testing.assert_allclose(d, np.exp(-n / beta), rtol=1e-12)
        assert series.direction[-1] == -1 and series.direction[0] == 1
