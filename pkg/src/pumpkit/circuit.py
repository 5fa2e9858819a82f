"""Brick-wall pump circuits acting on tubes of pumped atoms.

Positions and chiralities are classical: every operation cycle activates
double wells of alternating bond parity; a lone atom crosses its double well,
two atoms collide, receive (SWAP)^alpha on their spins and bounce.  Spins are
held either in a pair registry (integer alpha only) or in a full state
vector.  Both engines carry a leading batch axis over STO hold times.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import TimeTrace
from .errors import InvariantViolation, ProtocolOrderError, UnsupportedCircuitError
from .gates import swap_alpha_unitary

UP, DOWN = 0, 1
_SQRT2 = math.sqrt(2.0)
# singlet over (first, second) qubit with basis index 2*s_first + s_second
_SINGLET = np.array([0.0, -1.0, 1.0, 0.0], dtype=complex) / _SQRT2
MAX_STATEVECTOR_ATOMS = 16


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class TubeConfig:
    L: int
    filling: float = 0.65
    seed: int | None = None
    boundary: str = "hold"
    margin: int = 0
    singles: float = 0.0

    def __post_init__(self):
        if self.L <= 0 or self.L % 2:
            raise ValueError(f"L must be a positive even number, got {self.L}")
        if self.margin < 0 or self.margin % 2 or 2 * self.margin > self.L:
            raise ValueError("margin must be even, >= 0 and leave room for cells")
        if not 0.0 <= self.filling <= 1.0 or not 0.0 <= self.singles <= 1.0:
            raise ValueError("filling and singles are probabilities")
        if self.boundary not in ("hold", "mirror"):
            raise ValueError("boundary must be 'hold' or 'mirror'")


@dataclass(frozen=True)
class Layer:
    alpha: float
    bonds: dict = field(default_factory=dict)  # left site of bond -> alpha

    def alpha_at(self, bond: int) -> float:
        return self.bonds.get(bond, self.alpha)

    @property
    def alphas(self):
        return [self.alpha, *self.bonds.values()]


@dataclass(frozen=True)
class Circuit:
    layers: tuple = ()
    period: float | None = None
    direction: int = 1

    @classmethod
    def uniform(cls, alphas, **kw) -> "Circuit":
        return cls(tuple(Layer(float(a)) for a in alphas), **kw)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def is_integer(self) -> bool:
        return all(_is_integer(a) for layer in self.layers for a in layer.alphas)

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "layers": [
                {"alpha": layer.alpha, **({"bonds": {str(k): v for k, v in layer.bonds.items()}} if layer.bonds else {})}
                for layer in self.layers
            ],
            "pump": {"T": self.period, "direction": self.direction},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Circuit":
        layers = tuple(
            Layer(float(item["alpha"]), {int(k): float(v) for k, v in item.get("bonds", {}).items()})
            for item in data["layers"]
        )
        if "depth" in data and data["depth"] != len(layers):
            raise ValueError(f"circuit depth {data['depth']} does not match {len(layers)} layers")
        pump = data.get("pump", {})
        return cls(layers, pump.get("T"), int(pump.get("direction", 1)))

    @classmethod
    def load(cls, path) -> "Circuit":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _is_integer(a: float) -> bool:
    return abs(a - round(a)) < 1e-12


@dataclass(frozen=True)
class NoiseModel:
    alpha_sigma: float = 0.0
    survival: float = 1.0

    def __post_init__(self):
        if self.alpha_sigma < 0:
            raise ValueError("alpha_sigma must be >= 0")
        if not 0.0 <= self.survival <= 1.0:
            raise ValueError("survival must lie in [0, 1]")

    @property
    def is_noiseless(self) -> bool:
        return self.alpha_sigma == 0.0 and self.survival == 1.0


@dataclass(frozen=True)
class STOSettings:
    f1: float = 216.5
    taus: tuple = (0.0,)

    def __post_init__(self):
        if not self.f1 > 0:
            raise ValueError("f1 must be positive")
        object.__setattr__(self, "taus", tuple(float(t) for t in np.atleast_1d(self.taus)))

    @classmethod
    def grid(cls, f1: float = 216.5, periods: float = 2.0, n: int = 200) -> "STOSettings":
        """``n`` hold times spanning ``periods`` base periods, endpoint excluded."""
        return cls(f1, tuple(np.arange(n) * periods / (f1 * n)))


# --- spin sectors -------------------------------------------------------------


class PairRegistry:
    """Spins as a product of groups of one or two labelled atoms."""

    engine = "pair"

    def __init__(self, groups):
        # groups: list of (labels, amplitudes (2**k,))
        self.groups = {}
        self.where = {}
        self._batch = 1
        for gid, (labels, amps) in enumerate(groups):
            self.groups[gid] = [list(labels), np.asarray(amps, dtype=complex)[None, :]]
            for lab in labels:
                self.where[lab] = gid

    @property
    def batch(self) -> int:
        return self._batch

    def gate(self, a: int, b: int, alpha: float):
        if not _is_integer(alpha):
            raise UnsupportedCircuitError(
                f"pair engine supports integer alpha only, got {alpha}; use the state-vector engine"
            )
        if round(alpha) % 2 == 0:
            return
        ga, gb = self.where[a], self.where[b]
        la, lb = self.groups[ga][0], self.groups[gb][0]
        ia, ib = la.index(a), lb.index(b)
        la[ia] = b
        lb[ib] = a
        self.where[a], self.where[b] = gb, ga

    def broadcast(self, batch: int):
        if self._batch == 1 and batch > 1:
            for g in self.groups.values():
                g[1] = np.repeat(g[1], batch, axis=0)
            self._batch = batch

    def phase(self, positions, alive, rates):
        """Multiply |..s_q..> by exp(-i sum_q sigma_q * rates * x_q)."""
        for labels, amps in self.groups.values():
            k = len(labels)
            total = np.zeros((rates.size, 2**k))
            for pos, lab in enumerate(labels):
                if not alive[lab]:
                    continue
                bit = (np.arange(2**k) >> (k - 1 - pos)) & 1
                sigma = 1 - 2 * bit
                total += np.outer(rates, sigma) * positions[lab]
            amps *= np.exp(-1j * total)

    def _marginal_up(self, label):
        labels, amps = self.groups[self.where[label]]
        k = len(labels)
        pos = labels.index(label)
        bit = (np.arange(2**k) >> (k - 1 - pos)) & 1
        return np.sum(np.abs(amps[:, bit == 0]) ** 2, axis=1)

    def singlet_probability(self, a, b):
        ga, gb = self.where[a], self.where[b]
        if ga == gb:
            labels, amps = self.groups[ga]
            sign = 1.0 if labels == [a, b] else -1.0
            return np.abs(sign * (amps[:, 2] - amps[:, 1]) / _SQRT2) ** 2
        pa, pb = self._marginal_up(a), self._marginal_up(b)
        return 0.5 * (pa * (1 - pb) + (1 - pa) * pb)

    def pairs(self):
        return [tuple(labels) for labels, _ in self.groups.values() if len(labels) == 2]


class StateVector:
    """Full spin state over all labelled atoms, qubit order = label order."""

    engine = "statevector"

    def __init__(self, groups, n_atoms):
        if n_atoms > MAX_STATEVECTOR_ATOMS:
            raise UnsupportedCircuitError(
                f"state-vector engine limited to {MAX_STATEVECTOR_ATOMS} atoms, got {n_atoms}"
            )
        self.n = n_atoms
        psi = np.ones(1, dtype=complex)
        order = []
        for labels, amps in groups:
            psi = np.kron(psi, np.asarray(amps, dtype=complex))
            order.extend(labels)
        if order != list(range(n_atoms)):
            raise InvariantViolation("groups must cover labels in positional order")
        self.psi = psi.reshape((1,) + (2,) * n_atoms)

    @property
    def batch(self) -> int:
        return self.psi.shape[0]

    def gate(self, a: int, b: int, alpha: float):
        self.apply(swap_alpha_unitary(alpha), a, b)

    def apply(self, u, a, b):
        psi = np.moveaxis(self.psi, (a + 1, b + 1), (-2, -1))
        shape = psi.shape
        psi = (psi.reshape(shape[:-2] + (4,)) @ u.T).reshape(shape)
        self.psi = np.moveaxis(psi, (-2, -1), (a + 1, b + 1))

    def apply_single(self, u, a):
        psi = np.moveaxis(self.psi, a + 1, -1)
        self.psi = np.moveaxis(psi @ u.T, -1, a + 1)

    def broadcast(self, batch: int):
        if self.batch == 1 and batch > 1:
            self.psi = np.repeat(self.psi, batch, axis=0)

    def phase(self, positions, alive, rates):
        for q in range(self.n):
            if not alive[q]:
                continue
            ph = np.exp(-1j * rates * positions[q])
            shape = [rates.size] + [1] * self.n
            up = ph.reshape(shape)
            psi = np.moveaxis(self.psi, q + 1, 1)
            psi = np.stack([psi[:, 0] * up[:, 0], psi[:, 1] * up[:, 0].conj()], axis=1)
            self.psi = np.moveaxis(psi, 1, q + 1)

    def singlet_probability(self, a, b):
        psi = np.moveaxis(self.psi, (a + 1, b + 1), (-2, -1))
        v = (psi[..., 1, 0] - psi[..., 0, 1]) / _SQRT2
        return np.sum(np.abs(v.reshape(self.batch, -1)) ** 2, axis=1)

    def norm(self):
        return np.sqrt(np.sum(np.abs(self.psi.reshape(self.batch, -1)) ** 2, axis=1))


# --- tube state -------------------------------------------------------------


@dataclass
class AtomRecord:
    label: int
    position: int
    chirality: int
    pair_id: int
    alive: bool = True


@dataclass
class TubeState:
    L: int
    boundary: str
    positions: np.ndarray
    chirality: np.ndarray
    pair_id: np.ndarray  # -1 for single atoms
    alive: np.ndarray
    spins: object
    rng: np.random.Generator
    cycles: int = 0
    history: list = field(default_factory=list)
    stage: str = "prepared"
    initial_positions: np.ndarray | None = None
    n_pairs: int = 0

    @property
    def n_atoms(self) -> int:
        return self.positions.size

    def atoms(self):
        return [
            AtomRecord(i, int(self.positions[i]), int(self.chirality[i]), int(self.pair_id[i]), bool(self.alive[i]))
            for i in range(self.n_atoms)
        ]

    def original_pairs(self):
        out = {}
        for lab, pid in enumerate(self.pair_id):
            if pid >= 0:
                out.setdefault(int(pid), []).append(lab)
        return [tuple(v) for _, v in sorted(out.items())]

    def occupancy(self) -> np.ndarray:
        occ = np.full(self.L, -1, dtype=int)
        for lab in np.flatnonzero(self.alive):
            x = self.positions[lab]
            if occ[x] >= 0:
                raise InvariantViolation(f"site {x} holds atoms {occ[x]} and {lab}")
            occ[x] = lab
        return occ

    def label_order(self):
        idx = np.flatnonzero(self.alive)
        return idx[np.argsort(self.positions[idx], kind="stable")]


def init_tube(config: TubeConfig, engine: str = "pair", rng: np.random.Generator | None = None) -> TubeState:
    """Load singlet pairs into the unit cells (2i, 2i+1) inside the margins."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    positions, chirality, pair_id, groups = [], [], [], []
    n_pairs = 0
    for cell in range(config.margin // 2, (config.L - config.margin) // 2):
        left = 2 * cell
        if rng.random() < config.filling:
            a = len(positions)
            positions += [left, left + 1]
            chirality += [-1, +1]
            pair_id += [n_pairs, n_pairs]
            groups.append(((a, a + 1), _SINGLET))
            n_pairs += 1
        elif config.singles > 0 and rng.random() < config.singles:
            side = int(rng.integers(2))
            spin = int(rng.integers(2))
            positions.append(left + side)
            chirality.append(+1 if side else -1)
            pair_id.append(-1)
            groups.append(((len(positions) - 1,), np.eye(2)[spin]))
    n = len(positions)
    if engine == "pair":
        spins = PairRegistry(groups)
    elif engine == "statevector":
        spins = StateVector(groups, n)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    pos = np.array(positions, dtype=int)
    state = TubeState(
        L=config.L,
        boundary=config.boundary,
        positions=pos,
        chirality=np.array(chirality, dtype=int),
        pair_id=np.array(pair_id, dtype=int),
        alive=np.ones(n, dtype=bool),
        spins=spins,
        rng=rng,
        initial_positions=pos.copy(),
        n_pairs=n_pairs,
    )
    return state


def _active_parity(cycle: int) -> int:
    """Parity of the left site of active bonds in operation cycle ``cycle`` (1-based)."""
    return cycle % 2


def _apply_losses(state: TubeState, survival: float):
    if survival >= 1.0:
        return
    idx = np.flatnonzero(state.alive)
    lost = idx[state.rng.random(idx.size) >= survival]
    state.alive[lost] = False
    state.positions[lost] = -1


def step_cycle(state: TubeState, layer: Layer, alpha_jitter: float = 0.0) -> TubeState:
    """One operation cycle: half a pump period and one gate layer."""
    state.cycles += 1
    parity = _active_parity(state.cycles)
    occ = state.occupancy()
    events = []
    bonds = sorted({x if (x - parity) % 2 == 0 else x - 1 for x in state.positions[state.alive]})
    for b in bonds:
        left = int(occ[b]) if b >= 0 else -1
        right = int(occ[b + 1]) if b + 1 < state.L else -1
        if b < 0 or b + 1 >= state.L:
            lab = left if left >= 0 else right
            flip = state.boundary == "mirror"
            if flip:
                state.chirality[lab] *= -1
            events.append(("wall", lab, flip))
        elif left >= 0 and right >= 0:
            alpha = layer.alpha_at(b) + alpha_jitter
            state.spins.gate(left, right, alpha)
            state.chirality[left] *= -1
            state.chirality[right] *= -1
            events.append(("collide", left, right, alpha))
        else:
            lab, src, dst, inward = (
                (left, b, b + 1, state.chirality[left] == 1)
                if left >= 0
                else (right, b + 1, b, state.chirality[right] == -1)
            )
            if inward:
                state.positions[lab] = dst
                events.append(("move", lab, src, dst))
            else:
                events.append(("stay", lab))
    state.history.append((layer, events))
    state.occupancy()
    return state


@dataclass
class ForwardResult:
    state: TubeState
    separations: list  # (label_a, label_b, s) per spin pair


def spin_pair_separations(state: TubeState):
    if not isinstance(state.spins, PairRegistry):
        return []
    out = []
    for a, b in state.spins.pairs():
        if state.alive[a] and state.alive[b]:
            out.append((a, b, int(abs(state.positions[a] - state.positions[b]))))
    return out


def run_forward(state: TubeState, circuit: Circuit, noise: NoiseModel = NoiseModel()) -> ForwardResult:
    if state.stage != "prepared":
        raise ProtocolOrderError(f"forward pump requires a freshly prepared tube, stage is {state.stage!r}")
    for layer in circuit.layers:
        _apply_losses(state, noise.survival)
        jitter = state.rng.normal(0.0, noise.alpha_sigma) if noise.alpha_sigma > 0 else 0.0
        step_cycle(state, layer, jitter)
    state.stage = "forward"
    return ForwardResult(state, spin_pair_separations(state))


def apply_gradient(state: TubeState, sto: STOSettings) -> TubeState:
    """Frozen-lattice gradient hold for every time in ``sto.taus`` at once.

    Spin sigma at site x picks up exp(-i sigma/2 * 2 pi f1 (x - x_c) tau),
    x_c being the tube centre.
    """
    if state.stage != "forward":
        raise ProtocolOrderError(f"gradient must follow the forward pump, stage is {state.stage!r}")
    taus = np.asarray(sto.taus, dtype=float)
    state.spins.broadcast(taus.size)
    if state.spins.batch != taus.size:
        raise ProtocolOrderError("spin batch does not match the STO time grid")
    centre = 0.5 * (state.L - 1)
    rates = np.pi * sto.f1 * taus
    state.spins.phase(state.positions - centre, state.alive, rates)
    state.stage = "frozen"
    return state


def run_reverse(state: TubeState, noise: NoiseModel = NoiseModel()) -> TubeState:
    """Retrace the forward history with inverted gates and transport."""
    if state.stage not in ("forward", "frozen"):
        raise ProtocolOrderError(f"reverse pump needs forward history, stage is {state.stage!r}")
    for layer, events in reversed(state.history):
        _apply_losses(state, noise.survival)
        jitter = state.rng.normal(0.0, noise.alpha_sigma) if noise.alpha_sigma > 0 else 0.0
        for ev in reversed(events):
            kind = ev[0]
            if kind == "move":
                _, lab, src, _ = ev
                if state.alive[lab]:
                    state.positions[lab] = src
            elif kind == "collide":
                _, a, b, alpha = ev
                nominal = alpha if noise.alpha_sigma == 0 else _nominal_alpha(layer, state, a, b)
                if state.alive[a] and state.alive[b]:
                    state.spins.gate(a, b, -nominal + jitter)
                for lab in (a, b):
                    if state.alive[lab]:
                        state.chirality[lab] *= -1
            elif kind == "wall":
                _, lab, flipped = ev
                if flipped and state.alive[lab]:
                    state.chirality[lab] *= -1
        state.cycles -= 1
        state.occupancy()
    state.history = []
    state.stage = "reversed"
    return state


def _nominal_alpha(layer: Layer, state: TubeState, a: int, b: int) -> float:
    return layer.alpha_at(int(min(state.positions[a], state.positions[b])))


def measure_singlet_fraction(state: TubeState) -> np.ndarray | None:
    """Singlet fraction of the original pairs, one value per STO time.

    Pairs that lost an atom count as zero; the denominator is the number of
    initially loaded pairs.  Returns ``None`` for a tube without pairs.
    """
    if state.stage != "reversed":
        raise ProtocolOrderError(f"singlet detection follows the reverse pump, stage is {state.stage!r}")
    pairs = state.original_pairs()
    if not pairs:
        return None
    total = np.zeros(state.spins.batch)
    for a, b in pairs:
        if not (state.alive[a] and state.alive[b]):
            continue
        if abs(int(state.positions[a]) - int(state.positions[b])) != 1:
            raise ProtocolOrderError(f"pair ({a}, {b}) not on adjacent sites at detection")
        total += state.spins.singlet_probability(a, b)
    return total / len(pairs)


# --- ensembles ----------------------------------------------------------------


def select_engine(circuit: Circuit, noise: NoiseModel, engine: str = "auto") -> str:
    if engine == "auto":
        return "pair" if circuit.is_integer() and noise.alpha_sigma == 0 else "statevector"
    if engine == "pair" and (not circuit.is_integer() or noise.alpha_sigma > 0):
        raise UnsupportedCircuitError("pair engine cannot run non-integer alpha or alpha jitter")
    return engine


def run_tube(config, circuit, sto, noise=NoiseModel(), engine="auto", rng=None):
    """Prepare, pump forward, apply the gradient, pump back and detect."""
    engine = select_engine(circuit, noise, engine)
    state = init_tube(config, engine, rng)
    fwd = run_forward(state, circuit, noise)
    apply_gradient(state, sto)
    run_reverse(state, noise)
    return measure_singlet_fraction(state), fwd.separations, state


@dataclass
class EnsembleResult:
    trace: TimeTrace
    histogram: dict | None
    n_pairs: int
    n_tubes: int
    engine: str
    seed: int | None
    per_tube: np.ndarray | None = None


def tube_seeds(seed, n_tubes):
    return np.random.SeedSequence(seed).spawn(n_tubes)


def simulate_ensemble(
    config: TubeConfig,
    circuit: Circuit,
    sto: STOSettings,
    noise: NoiseModel = NoiseModel(),
    n_tubes: int = 1,
    engine: str = "auto",
) -> EnsembleResult:
    """Pooled singlet fraction over independent tubes plus the separation histogram."""
    if n_tubes < 1:
        raise ValueError("n_tubes must be >= 1")
    engine = select_engine(circuit, noise, engine)
    taus = np.asarray(sto.taus)
    sums = np.zeros(taus.size)
    per_tube = []
    weights = []
    counts: dict[int, int] = {}
    n_pairs = 0
    for ss in tube_seeds(config.seed, n_tubes):
        rng = np.random.default_rng(ss)
        frac, seps, state = run_tube(config, circuit, sto, noise, engine, rng)
        if frac is None:
            continue
        n_pairs += state.n_pairs
        sums += frac * state.n_pairs
        per_tube.append(frac)
        weights.append(state.n_pairs)
        for *_, s in seps:
            counts[s] = counts.get(s, 0) + 1
    if n_pairs == 0:
        mean = np.full(taus.size, np.nan)
        stderr = np.full(taus.size, np.nan)
        per = None
    else:
        mean = sums / n_pairs
        per = np.array(per_tube)
        if len(per_tube) > 1:
            w = np.array(weights, dtype=float)
            var = np.sum(w[:, None] * (per - mean) ** 2, axis=0) / w.sum()
            stderr = np.sqrt(var / (len(per_tube) - 1))
        else:
            stderr = np.zeros(taus.size)
    histogram = None
    if engine == "pair":
        total = sum(counts.values())
        histogram = {s: c / total for s, c in sorted(counts.items())} if total else {}
    meta = {
        "f1": sto.f1,
        "circuit": circuit.to_dict(),
        "seed": config.seed,
        "n_tubes": n_tubes,
        "engine": engine,
        "filling": config.filling,
        "L": config.L,
        "margin": config.margin,
        "boundary": config.boundary,
        "noise": {"alpha_sigma": noise.alpha_sigma, "survival": noise.survival},
    }
    trace = TimeTrace(taus, mean, stderr, meta)
    return EnsembleResult(trace, histogram, n_pairs, n_tubes, engine, config.seed, per)


def engines_agree(
    config: TubeConfig,
    circuit: Circuit,
    sto: STOSettings,
    tol: float = 1e-10,
) -> dict:
    """Run one tube through both engines layer by layer and compare traces."""
    from .errors import EngineDisagreement

    if not circuit.is_integer():
        raise UnsupportedCircuitError("engine comparison needs an integer-alpha circuit")
    states = {}
    for engine in ("pair", "statevector"):
        states[engine] = init_tube(config, engine, np.random.default_rng(config.seed))
    for k, layer in enumerate(circuit.layers, start=1):
        for st in states.values():
            step_cycle(st, layer)
        a, b = states["pair"], states["statevector"]
        if not np.array_equal(a.positions, b.positions):
            raise InvariantViolation("positional dynamics differ between engines")
    for st in states.values():
        st.stage = "forward"
        apply_gradient(st, sto)
        run_reverse(st)
    fa = measure_singlet_fraction(states["pair"])
    fb = measure_singlet_fraction(states["statevector"])
    if fa is None:
        return {"agree": True, "max_deviation": 0.0, "n_pairs": 0}
    dev = float(np.max(np.abs(fa - fb)))
    report = {"agree": dev < tol, "max_deviation": dev, "n_pairs": states["pair"].n_pairs}
    if dev >= tol:
        report["first_differing_layer"] = _first_differing_layer(config, circuit, tol)
        raise EngineDisagreement(f"engines differ by {dev:.3e}", report)
    return report


def _first_differing_layer(config, circuit, tol):
    for depth in range(circuit.depth + 1):
        sub = Circuit(circuit.layers[:depth])
        sto = STOSettings(taus=(0.0,))
        fa, _, _ = run_tube(config, sub, sto, engine="pair", rng=np.random.default_rng(config.seed))
        fb, _, _ = run_tube(config, sub, sto, engine="statevector", rng=np.random.default_rng(config.seed))
        if fa is not None and np.max(np.abs(fa - fb)) >= tol:
            return depth
    return None


# --- shuttle double occupancy -------------------------------------------------


@dataclass
class ShuttleSeries:
    n: np.ndarray  # operation cycles elapsed (half-integers fall on the dimerised point)
    D: np.ndarray
    configuration: np.ndarray  # "staggered" or "dimerised"
    direction: np.ndarray  # +1 forward, -1 after the reversal

    def curve(self, configuration: str):
        m = self.configuration == configuration
        return self.n[m], self.D[m]


def simulate_shuttle_double_occupancy(
    d_staggered: float,
    d_dimerised: float,
    fidelity: float,
    n_cycles: int,
    reversal: int | None = None,
    d0: float = 1.0,
) -> ShuttleSeries:
    """Double occupancy of shuttled pairs, D(N) = d0 * D_config * F^(2N).

    Integer N fall on the staggered halting point, N + 1/2 on the dimerised
    configuration in between.  ``reversal`` is the cycle after which the
    pump direction flips; the decay counts every operation cycle.
    """
    if not 0.0 < fidelity <= 1.0:
        raise ValueError("fidelity must lie in (0, 1]")
    n = np.arange(2 * n_cycles + 1) / 2.0
    is_stag = (np.arange(n.size) % 2) == 0
    base = np.where(is_stag, d_staggered, d_dimerised)
    D = d0 * base * fidelity ** (2 * n)
    config = np.where(is_stag, "staggered", "dimerised")
    direction = np.ones(n.size, dtype=int)
    if reversal is not None:
        direction[n > reversal] = -1
    return ShuttleSeries(n, D, config, direction)
