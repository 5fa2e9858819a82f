"""Double-well superexchange, (SWAP)^alpha gates and two-spin protocols.

Two-particle Bloch sphere
-------------------------
All rotations use one convention, fixed here.  The sphere is spanned by
|s> (north pole, +z) and |t> (south pole, -z) with

    |s> = (|dn,up> - |up,dn>) / sqrt 2,   |t> = (|dn,up> + |up,dn>) / sqrt 2.

Pauli matrices act on the (s, t) amplitudes, so |dn,up> sits at +x,
|up,dn> at -x, |i-> = (|dn,up> - i|up,dn>)/sqrt 2 at -y and |i+> at +y.
Superexchange lowers the singlet: H_ex = -J sigma_z / 2 (up to a constant),
which reproduces the (SWAP)^alpha matrix with phi = pi alpha.  The gradient
couples s and t: H_STO = Delta_ud sigma_x / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import CalibrationRangeError, DegenerateSpectrumError, RangeError, RegimeError

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class DoubleWellParams:
    t_x: float
    Delta: float
    U: float

    def __post_init__(self):
        if not self.U > 0:
            raise RegimeError(f"U must be positive for gate operation, got {self.U}")


def dw_hamiltonian(params: DoubleWellParams) -> np.ndarray:
    """Double well in the basis {|ud,0>, |u,d>, |d,u>, |0,ud>}."""
    t, d, u = params.t_x, params.Delta, params.U
    return np.array(
        [
            [u + 2 * d, -t, t, 0.0],
            [-t, 0.0, 0.0, -t],
            [t, 0.0, 0.0, t],
            [0.0, -t, t, u - 2 * d],
        ]
    )


def jex_exact(params: DoubleWellParams) -> float:
    """Splitting of the two lowest double-well eigenstates."""
    h = dw_hamiltonian(params)
    e = np.linalg.eigvalsh(h)
    gap = float(e[1] - e[0])
    if gap < 64 * np.finfo(float).eps * np.abs(h).max():
        if params.t_x == 0.0:
            return 0.0
        raise DegenerateSpectrumError(
            f"two lowest double-well levels degenerate (gap {gap:.3e}) for {params}"
        )
    return gap


def jex_perturbative(params: DoubleWellParams) -> float:
    t, d, u = params.t_x, params.Delta, params.U
    if u <= 2 * abs(d):
        raise RegimeError(f"perturbative superexchange needs U > 2|Delta| (U={u}, Delta={d})")
    return 4 * t**2 / (u * (1 - (2 * d / u) ** 2))


@dataclass(frozen=True)
class GateAngle:
    phi: float

    @property
    def alpha(self) -> float:
        return self.phi / math.pi


def _jex_spline(schedule) -> CubicSpline:
    tau = np.append(schedule.tau, schedule.tau[0] + 1.0)
    j = np.append(schedule.Jex, schedule.Jex[0])
    return CubicSpline(tau, j, bc_type="periodic", extrapolate="periodic")


def gate_angle(schedule, tau_start: float = -0.25, tau_end: float = 0.25) -> GateAngle:
    """Rotation angle (1/hbar) * integral of J_ex over [tau_start, tau_end].

    Times are in units of the pump period; the tabulated period is treated
    as periodic, so windows may straddle tau = 0.  The integrand is the
    periodic cubic interpolant of the table, integrated exactly.
    """
    if tau_end < tau_start:
        raise RangeError(f"window end {tau_end} precedes start {tau_start}")
    if tau_end - tau_start > 1.0 + 1e-12:
        raise RangeError("gate window longer than the tabulated period")
    if np.any(np.isnan(schedule.Jex)):
        raise RangeError("schedule carries no J_ex column (built without U)")
    integral = float(_jex_spline(schedule).integrate(tau_start, tau_end))
    return GateAngle(2 * math.pi * schedule.recoil_hz * schedule.period * integral)


def swap_alpha_unitary(alpha: float) -> np.ndarray:
    """(SWAP)^alpha over {|uu>, |ud>, |du>, |dd>}."""
    e = np.exp(1j * math.pi * alpha)
    a, b = (1 + e) / 2, (1 - e) / 2
    return np.array(
        [[1, 0, 0, 0], [0, a, b, 0], [0, b, a, 0], [0, 0, 0, 1]],
        dtype=complex,
    )


@dataclass
class CalibrationResult:
    knob: str
    value: float
    alpha: float
    target: float
    evaluations: int


def calibrate_gate(
    target_alpha: float,
    family,
    bracket: tuple[float, float],
    knob: str = "T",
    tol: float = 1e-4,
    window: tuple[float, float] = (-0.25, 0.25),
    n_check: int = 7,
    max_iter: int = 200,
) -> CalibrationResult:
    """Bisection for the knob value whose gate exponent equals ``target_alpha``.

    ``family(value)`` returns a schedule table for one knob value (pump
    period or lattice depth).  Monotonicity is checked on ``n_check``
    evenly spaced points of the bracket before searching.
    """
    lo, hi = map(float, bracket)

    def alpha_at(v):
        return gate_angle(family(v), *window).alpha

    grid = np.linspace(lo, hi, n_check)
    values = np.array([alpha_at(v) for v in grid])
    steps = np.diff(values)
    if not (np.all(steps >= 0) or np.all(steps <= 0)):
        raise CalibrationRangeError(
            f"alpha is not monotone in {knob} over [{lo}, {hi}]", span=(values.min(), values.max())
        )
    span = (float(values.min()), float(values.max()))
    evaluations = n_check
    for v, a in ((lo, values[0]), (hi, values[-1])):
        if abs(a - target_alpha) < tol:
            return CalibrationResult(knob, v, float(a), target_alpha, evaluations)
    if not span[0] <= target_alpha <= span[1]:
        raise CalibrationRangeError(
            f"alpha={target_alpha} not reachable with {knob} in [{lo}, {hi}]; "
            f"achievable alpha in [{span[0]:.6g}, {span[1]:.6g}]",
            span=span,
        )
    increasing = values[-1] > values[0]
    k = int(np.searchsorted(values if increasing else -values, target_alpha if increasing else -target_alpha))
    lo, hi = grid[k - 1], grid[k]
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        a = alpha_at(mid)
        evaluations += 1
        if abs(a - target_alpha) < tol:
            return CalibrationResult(knob, mid, a, target_alpha, evaluations)
        if (a < target_alpha) == increasing:
            lo = mid
        else:
            hi = mid
    raise CalibrationRangeError(f"bisection did not reach |d alpha| < {tol}", span=span)


# --- two-spin states on the (s, t) Bloch sphere ---------------------------

# Rows express the product states |u,d>, |d,u> in (s, t) amplitudes.
_PRODUCT_TO_ST = np.array([[-1, 1], [1, 1]], dtype=complex) / SQRT2


@dataclass(frozen=True)
class TwoSpinState:
    """Amplitudes in the (s, t) basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(2)
        object.__setattr__(self, "amplitudes", a)
        norm = np.linalg.norm(a)
        if abs(norm - 1) > 1e-12:
            raise ValueError(f"state norm {norm} differs from 1")

    @classmethod
    def from_product(cls, up_dn: complex, dn_up: complex) -> "TwoSpinState":
        """State given as amplitudes of |u,d> and |d,u>."""
        return cls(_PRODUCT_TO_ST.T @ np.array([up_dn, dn_up], dtype=complex))

    def product_amplitudes(self) -> np.ndarray:
        """(|u,d>, |d,u>) amplitudes."""
        return _PRODUCT_TO_ST.conj() @ self.amplitudes

    def fidelity(self, other: "TwoSpinState") -> float:
        return float(abs(np.vdot(other.amplitudes, self.amplitudes)) ** 2)

    def bloch_vector(self) -> np.ndarray:
        a = self.amplitudes
        return np.array([np.vdot(a, s @ a).real for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)])


SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

SINGLET = TwoSpinState(np.array([1, 0]))
TRIPLET = TwoSpinState(np.array([0, 1]))
UP_DN = TwoSpinState.from_product(1, 0)
DN_UP = TwoSpinState.from_product(0, 1)
I_MINUS = TwoSpinState.from_product(-1j / SQRT2, 1 / SQRT2)
I_PLUS = TwoSpinState.from_product(1j / SQRT2, 1 / SQRT2)


def rotation(axis: str, angle: float) -> np.ndarray:
    """exp(-i angle sigma_axis / 2)."""
    sigma = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}[axis]
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * sigma


def evolve_two_spin(state: TwoSpinState, kind: str, energy_hz: float, duration: float) -> TwoSpinState:
    """Exact evolution under superexchange (``kind='ex'``) or gradient (``'sto'``).

    ``energy_hz`` is J_ex / h or Delta_ud / h; ``duration`` in seconds.
    """
    angle = 2 * math.pi * energy_hz * duration
    if kind == "ex":
        u = rotation("z", -angle)
    elif kind == "sto":
        u = rotation("x", angle)
    else:
        raise ValueError(f"unknown Hamiltonian {kind!r}; use 'ex' or 'sto'")
    return TwoSpinState(u @ state.amplitudes)


def rotate_by_exchange(state: TwoSpinState, phi: float) -> TwoSpinState:
    """Superexchange evolution with integrated angle ``phi``."""
    return TwoSpinState(rotation("z", -phi) @ state.amplitudes)


@dataclass
class PreparationResult:
    state: TwoSpinState
    fidelity: float


def prepare_product_state(
    phi: float = math.pi / 2,
    gradient_hz: float = 1.0,
    pulse: float | None = None,
) -> PreparationResult:
    """Singlet -> gradient pulse -> quarter-cycle exchange, targeting |u,d>.

    ``phi`` is the exchange angle integrated over the quarter-cycle pump
    window; ``pulse`` the gradient duration in seconds (defaults to the
    ideal pi/2 pulse 1 / (4 gradient_hz)).
    """
    if pulse is None:
        pulse = 1.0 / (4.0 * gradient_hz)
    state = evolve_two_spin(SINGLET, "sto", gradient_hz, pulse)
    state = rotate_by_exchange(state, phi)
    return PreparationResult(state, state.fidelity(UP_DN))


def singlet_probability(state: TwoSpinState) -> float:
    return float(abs(state.amplitudes[0]) ** 2)


def measure_sigma_y(state: TwoSpinState) -> float:
    """<sigma_y> from singlet fractions after pi/2 and 3pi/2 gradient rotations."""
    p_quarter = singlet_probability(TwoSpinState(rotation("x", math.pi / 2) @ state.amplitudes))
    p_three = singlet_probability(TwoSpinState(rotation("x", 3 * math.pi / 2) @ state.amplitudes))
    return p_quarter - p_three
