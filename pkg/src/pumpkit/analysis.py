"""Spectral and regression analysis of singlet-fraction time traces.

The multi-frequency model is

    F(tau) = exp(-Gamma tau) * sum_s A_s sin(2 pi s f1 tau + theta_s) + F0

with one damping rate shared by all components.  For fixed Gamma the model
is linear in (A_s cos theta_s, A_s sin theta_s, F0), which is used both to
seed and to check the full nonlinear fit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit, least_squares, minimize_scalar

from .errors import (
    DomainError,
    FitError,
    InsufficientDataError,
    MultiModalSpectrumError,
    RankError,
)

DEFAULT_SMAX = 12


@dataclass
class TimeTrace:
    tau: np.ndarray
    value: np.ndarray
    stderr: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.tau.shape:
                raise ValueError("stderr must match tau in shape")
        if self.tau.ndim != 1 or self.tau.shape != self.value.shape:
            raise ValueError("tau and value must be 1-D arrays of equal length")
        if self.tau.size > 1 and np.any(np.diff(self.tau) <= 0):
            raise ValueError("tau must be strictly increasing")
        if not (np.all(np.isfinite(self.tau)) and np.all(np.isfinite(self.value))):
            raise ValueError("trace contains non-finite samples")

    def __len__(self):
        return self.tau.size

    @property
    def span(self) -> float:
        return float(self.tau[-1] - self.tau[0]) if len(self) else 0.0

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.tau.tobytes())
        h.update(self.value.tobytes())
        return h.hexdigest()[:16]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for key, val in sorted(self.metadata.items()):
                fh.write(f"# {key}: {json.dumps(val, sort_keys=True)}\n")
            w.writerow(["tau_s", "value", "stderr"] if self.stderr is not None else ["tau_s", "value"])
            for i in range(len(self)):
                row = [repr(float(self.tau[i])), repr(float(self.value[i]))]
                if self.stderr is not None:
                    row.append(repr(float(self.stderr[i])))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "TimeTrace":
        """Read ``tau_s, value[, stderr]`` rows; ``#`` lines hold metadata."""
        tau, value, err, meta = [], [], [], {}
        with open(path, newline="") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.strip()
                if not text:
                    continue
                if text.startswith("#"):
                    key, _, raw = text[1:].partition(":")
                    try:
                        meta[key.strip()] = json.loads(raw)
                    except json.JSONDecodeError:
                        meta[key.strip()] = raw.strip()
                    continue
                cells = next(csv.reader([text]))
                if cells[0].strip().lower().startswith("tau"):
                    continue
                try:
                    nums = [float(c) for c in cells]
                except ValueError as exc:
                    raise ValueError(f"{path}: line {lineno}: {exc}") from None
                if len(nums) not in (2, 3):
                    raise ValueError(f"{path}: line {lineno}: expected 2 or 3 columns, got {len(nums)}")
                tau.append(nums[0])
                value.append(nums[1])
                if len(nums) == 3:
                    err.append(nums[2])
        if not tau:
            raise ValueError(f"{path}: no samples found")
        if err and len(err) != len(tau):
            raise ValueError(f"{path}: stderr column present on some rows only")
        return cls(np.array(tau), np.array(value), np.array(err) if err else None, meta)


def eq_model(tau, f1, amplitudes, phases, gamma=0.0, offset=0.0):
    """Evaluate the multi-frequency model; ``amplitudes[k]`` belongs to s = k + 1."""
    tau = np.asarray(tau, dtype=float)
    s = np.arange(1, len(amplitudes) + 1)
    arg = 2 * np.pi * f1 * np.outer(tau, s) + np.asarray(phases)
    return np.exp(-gamma * tau) * (np.sin(arg) @ np.asarray(amplitudes)) + offset


# --- multi-frequency fit ------------------------------------------------------


@dataclass
class MultiFreqFit:
    f1: float
    s_max: int
    amplitudes: np.ndarray
    phases: np.ndarray
    gamma: float
    offset: float
    amplitude_err: np.ndarray
    phase_err: np.ndarray
    gamma_err: float
    offset_err: float
    covariance: np.ndarray  # over (Gamma, a_1, b_1, ..., a_smax, b_smax, F0)
    residual_norm: float
    trace_hash: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def s(self) -> np.ndarray:
        return np.arange(1, self.s_max + 1)

    def amplitude(self, s: int) -> float:
        return float(self.amplitudes[s - 1])

    def weights(self) -> dict:
        total = self.amplitudes.sum()
        return {int(s): float(a / total) for s, a in zip(self.s, self.amplitudes)} if total > 0 else {}

    def dominant(self, n: int = 2) -> list[int]:
        return [int(s) for s in self.s[np.argsort(self.amplitudes)[::-1][:n]]]

    def evaluate(self, tau):
        return eq_model(tau, self.f1, self.amplitudes, self.phases, self.gamma, self.offset)

    def to_dict(self) -> dict:
        return {
            "f1": self.f1,
            "s_max": self.s_max,
            "amplitudes": self.amplitudes.tolist(),
            "amplitude_err": self.amplitude_err.tolist(),
            "phases": self.phases.tolist(),
            "phase_err": self.phase_err.tolist(),
            "gamma": self.gamma,
            "gamma_err": self.gamma_err,
            "offset": self.offset,
            "offset_err": self.offset_err,
            "covariance": self.covariance.tolist(),
            "residual_norm": self.residual_norm,
            "trace_hash": self.trace_hash,
            "metadata": self.metadata,
        }

    def amplitude_rows(self):
        return [(int(s), float(a), float(e)) for s, a, e in zip(self.s, self.amplitudes, self.amplitude_err)]


def _design(tau, f1, s_max, gamma):
    s = np.arange(1, s_max + 1)
    arg = 2 * np.pi * f1 * np.outer(tau, s)
    env = np.exp(-gamma * tau)[:, None]
    cols = np.empty((tau.size, 2 * s_max + 1))
    cols[:, 0:-1:2] = env * np.cos(arg)  # multiplies A sin(theta)
    cols[:, 1:-1:2] = env * np.sin(arg)  # multiplies A cos(theta)
    cols[:, -1] = 1.0
    return cols


def _linear_solve(tau, y, f1, s_max, gamma):
    X = _design(tau, f1, s_max, gamma)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    return coef, float(r @ r)


def fit_multifreq(
    trace: TimeTrace,
    f1: float,
    s_max: int = DEFAULT_SMAX,
    gamma_max: float | None = None,
    max_nfev: int = 2000,
) -> MultiFreqFit:
    """Least-squares fit of the shared-damping multi-frequency model.

    ``f1`` is fixed (calibrated independently).  Gamma is located by a
    bounded scalar search on the separable residual, after which all
    parameters are refined jointly; the covariance is the residual-scaled
    inverse Gauss-Newton Hessian at the optimum.
    """
    tau, y = trace.tau, trace.value
    n_par = 2 * s_max + 2
    if len(trace) < n_par + 1:
        raise InsufficientDataError(f"{len(trace)} samples cannot constrain {n_par} parameters")
    if trace.span * f1 < 1.0 - 1e-9:
        raise InsufficientDataError("trace must span at least one base period 1/f1")
    if gamma_max is None:
        gamma_max = 20.0 / trace.span

    t0 = tau[0]
    tt = tau - t0  # shift for conditioning; phases and envelope mapped back below

    def profile(g):
        return _linear_solve(tt, y, f1, s_max, g)[1]

    grid = np.linspace(0.0, gamma_max, 41)
    costs = np.array([profile(g) for g in grid])
    k = int(np.argmin(costs))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(profile, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * gamma_max})
        g0 = float(res.x) if res.fun <= costs[k] else float(grid[k])
    else:
        g0 = float(grid[k])
    coef0, _ = _linear_solve(tt, y, f1, s_max, g0)

    def residual(p):
        return _design(tt, f1, s_max, p[0]) @ p[1:] - y

    def jac(p):
        X = _design(tt, f1, s_max, p[0])
        dg = -tt * (X[:, :-1] @ p[1:-1])
        return np.column_stack([dg, X])

    p0 = np.concatenate([[g0], coef0])
    sol = least_squares(
        residual, p0, jac=jac, bounds=([0.0] + [-np.inf] * (n_par - 1), np.inf),
        method="trf", ftol=1e-10, xtol=1e-12, gtol=1e-12, max_nfev=max_nfev,
    )
    if sol.status <= 0:
        raise FitError(
            f"multi-frequency fit did not converge: {sol.message}",
            best=sol.x,
            diagnostics={"nfev": sol.nfev, "cost": float(sol.cost), "status": sol.status},
        )
    p = sol.x
    rss = float(sol.fun @ sol.fun)
    dof = max(len(trace) - n_par, 1)
    J = sol.jac
    cov = np.linalg.pinv(J.T @ J) * (rss / dof)

    gamma = float(p[0])
    a, b = p[1:-1:2], p[2:-1:2]  # A sin(theta), A cos(theta) at shifted origin
    amps = np.hypot(a, b)
    phases_shifted = np.arctan2(a, b)
    # undo the time shift: exp(-G (t - t0)) sin(w (t - t0) + th) = exp(-G t) c sin(w t + th - w t0)
    scale = math.exp(gamma * t0)
    s = np.arange(1, s_max + 1)
    phases = np.mod(phases_shifted - 2 * np.pi * s * f1 * t0 + np.pi, 2 * np.pi) - np.pi
    amp_err = np.empty(s_max)
    ph_err = np.empty(s_max)
    for k in range(s_max):
        ia, ib = 1 + 2 * k, 2 + 2 * k
        c = cov[np.ix_([ia, ib], [ia, ib])]
        A = amps[k]
        if A > 0:
            ga = np.array([a[k], b[k]]) / A
            gp = np.array([b[k], -a[k]]) / A**2
            amp_err[k] = math.sqrt(max(ga @ c @ ga, 0.0))
            ph_err[k] = math.sqrt(max(gp @ c @ gp, 0.0))
        else:
            amp_err[k] = math.sqrt(max(np.trace(c) / 2, 0.0))
            ph_err[k] = math.inf
    return MultiFreqFit(
        f1=f1,
        s_max=s_max,
        amplitudes=amps * scale,
        phases=phases,
        gamma=gamma,
        offset=float(p[-1]),
        amplitude_err=amp_err * scale,
        phase_err=ph_err,
        gamma_err=float(math.sqrt(max(cov[0, 0], 0.0))),
        offset_err=float(math.sqrt(max(cov[-1, -1], 0.0))),
        covariance=cov,
        residual_norm=math.sqrt(rss),
        trace_hash=trace.digest(),
        metadata={"shared_damping": True, "nfev": int(sol.nfev), "time_origin": float(t0)},
    )


# --- spectra ------------------------------------------------------------------


@dataclass
class Spectrum:
    freq_hz: np.ndarray
    magnitude: np.ndarray
    f1: float | None = None
    parseval_error: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def freq_f1(self) -> np.ndarray | None:
        return None if self.f1 is None else self.freq_hz / self.f1

    @property
    def power(self) -> np.ndarray:
        return self.magnitude**2

    def weight_at_zero(self) -> float:
        p = self.power
        return float(p[0] / p.sum()) if p.sum() > 0 else 1.0

    def integer_peaks(self, s_max: int = DEFAULT_SMAX, f1: float | None = None) -> dict:
        """Magnitude at each integer multiple s * f1 (largest bin within one bin width)."""
        f1 = f1 or self.f1
        if f1 is None:
            raise ValueError("integer peaks need f1")
        df = self.freq_hz[1] - self.freq_hz[0]
        out = {}
        for s in range(1, s_max + 1):
            near = np.abs(self.freq_hz - s * f1) <= df
            if np.any(near):
                out[s] = float(self.magnitude[near].max())
        return out

    def dominant(self, n: int = 2, s_max: int = DEFAULT_SMAX) -> list[int]:
        peaks = self.integer_peaks(s_max)
        return [s for s, _ in sorted(peaks.items(), key=lambda kv: -kv[1])[:n]]


def _uniform(trace: TimeTrace):
    tau, y = trace.tau, trace.value
    dt = np.diff(tau)
    if np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        return tau, y, False
    grid = np.linspace(tau[0], tau[-1], tau.size)
    return grid, np.interp(grid, tau, y), True


def fft_spectrum(trace: TimeTrace, f1: float | None = None, window: str = "rectangular") -> Spectrum:
    """One-sided amplitude spectrum: a sine of amplitude A shows magnitude A."""
    if len(trace) < 8:
        raise InsufficientDataError(f"FFT needs at least 8 samples, got {len(trace)}")
    tau, y, resampled = _uniform(trace)
    n = y.size
    if window == "rectangular":
        w = np.ones(n)
    elif window == "hann":
        w = np.hanning(n)
    else:
        raise ValueError(f"unknown window {window!r}")
    yw = y * w
    X = np.fft.rfft(yw)
    dt = tau[1] - tau[0]
    freq = np.fft.rfftfreq(n, dt)
    # Parseval: sum |x|^2 = (1/n) sum over the full two-sided spectrum
    dup = np.full(X.size, 2.0)
    dup[0] = 1.0
    if n % 2 == 0:
        dup[-1] = 1.0
    lhs = float(yw @ yw)
    rhs = float(np.sum(dup * np.abs(X) ** 2) / n)
    err = abs(lhs - rhs) / lhs if lhs > 0 else abs(rhs)
    mag = np.abs(X) * dup / w.sum()
    meta = {"window": window, "resampled": resampled, "n": n, "trace_hash": trace.digest()}
    return Spectrum(freq, mag, f1 if f1 is not None else trace.metadata.get("f1"), err, meta)


# --- base frequency, decay and fidelity --------------------------------------------


@dataclass
class BaseFrequencyFit:
    f1: float
    stderr: float
    n_points: int


def fit_base_frequency(points) -> BaseFrequencyFit:
    """Proportional fit frequency = (2N + 1) f1 over (N_cyc, frequency) points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise InsufficientDataError("no points")
    n, f = pts[:, 0], pts[:, 1]
    if pts.shape[0] >= 2 and np.all(n == n[0]):
        raise RankError("all points share one cycle number; the slope is undetermined")
    s = 2 * n + 1
    ss = float(s @ s)
    f1 = float(s @ f) / ss
    if pts.shape[0] == 1:
        return BaseFrequencyFit(f1, math.nan, 1)
    r = f - f1 * s
    stderr = math.sqrt(float(r @ r) / (pts.shape[0] - 1) / ss)
    return BaseFrequencyFit(f1, stderr, pts.shape[0])


@dataclass
class DecayFit:
    beta: float
    D0: float
    beta_err: float
    D0_err: float


def fit_exponential_decay(N, D) -> DecayFit:
    """Least squares on D = D0 exp(-N / beta); a flat series gives beta = inf."""
    N = np.asarray(N, dtype=float)
    D = np.asarray(D, dtype=float)
    if N.size < 3:
        raise InsufficientDataError("exponential fit needs at least 3 points")
    if np.any(D <= 0):
        raise DomainError("double occupancies must be positive for an exponential fit")
    slope, intercept = np.polyfit(N, np.log(D), 1)

    def model(x, d0, kappa):
        return d0 * np.exp(-kappa * x)

    with warnings.catch_warnings():
        # exact data leave no residual to scale the covariance with
        warnings.simplefilter("ignore", OptimizeWarning)
        p, cov = curve_fit(model, N, D, p0=(math.exp(intercept), -slope), ftol=1e-14, xtol=1e-14)
    d0, kappa = map(float, p)
    cov = np.where(np.isfinite(cov), cov, 0.0)
    d0_err, kappa_err = (math.sqrt(max(v, 0.0)) for v in np.diag(cov))
    if abs(kappa) < 1e-14:
        return DecayFit(math.inf, d0, math.inf, d0_err)
    beta = 1.0 / kappa
    return DecayFit(beta, d0, kappa_err / kappa**2, d0_err)


def fidelity_from_beta(beta: float) -> float:
    """Per-atom fidelity sqrt(exp(-1/beta)) for a pair decay constant beta."""
    if not beta > 0:
        raise DomainError(f"decay constant must be positive, got {beta}")
    return math.exp(-0.5 / beta)


# --- single sine -------------------------------------------------------------------


@dataclass
class SineFit:
    frequency: float
    amplitude: float
    phase: float
    frequency_err: float
    gamma: float = 0.0
    offset: float = 0.0
    undetermined: bool = False


def _prescan(tau, y, pad=8):
    y = y - y.mean()
    w = np.hanning(y.size)
    n = pad * y.size
    mag = np.abs(np.fft.rfft(y * w, n))
    freq = np.fft.rfftfreq(n, tau[1] - tau[0])
    return freq, mag


def fit_single_sine(trace: TimeTrace, sidelobe_ratio: float = 3.0) -> SineFit:
    """Damped single-sine fit, refusing traces with a competing spectral peak."""
    if len(trace) < 8:
        raise InsufficientDataError(f"sine fit needs at least 8 samples, got {len(trace)}")
    tau, y, _ = _uniform(trace)
    if np.ptp(y) < 1e-12:
        return SineFit(math.nan, 0.0, math.nan, math.nan, 0.0, float(y.mean()), True)
    freq, mag = _prescan(tau, y)
    k = int(np.argmax(mag[1:])) + 1
    df = 1.0 / (tau[-1] - tau[0] + (tau[1] - tau[0]))
    interior = (mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:])
    peaks = np.flatnonzero(interior) + 1
    others = peaks[np.abs(freq[peaks] - freq[k]) > 2.5 * df]
    if others.size and mag[others].max() * sidelobe_ratio > mag[k]:
        raise MultiModalSpectrumError(
            f"secondary peak at {freq[others[np.argmax(mag[others])]]:.4g} Hz is within "
            f"a factor {sidelobe_ratio} of the main peak; use fit_multifreq"
        )
    f0 = float(freq[k])
    t0 = tau[0]
    tt = tau - t0
    c0 = float(y.mean())
    amp0 = float(np.sqrt(2) * np.std(y))
    X = np.column_stack([np.sin(2 * np.pi * f0 * tt), np.cos(2 * np.pi * f0 * tt)])
    ab, *_ = np.linalg.lstsq(X, y - c0, rcond=None)
    ph0 = float(np.arctan2(ab[1], ab[0]))

    def model(t, A, f, ph, g, c):
        return A * np.exp(-g * t) * np.sin(2 * np.pi * f * t + ph) + c

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        p, cov = curve_fit(model, tt, y, p0=(amp0, f0, ph0, 0.0, c0), ftol=1e-14, xtol=1e-14, gtol=1e-14, maxfev=20000)
    A, f, ph, g, c = map(float, p)
    if A < 0:
        A, ph = -A, ph + math.pi
    ph = (ph - 2 * math.pi * f * t0 + math.pi) % (2 * math.pi) - math.pi
    f_err = float(math.sqrt(max(cov[1, 1], 0.0))) if np.all(np.isfinite(cov)) else 0.0
    return SineFit(f, A * math.exp(g * t0), ph, f_err, g, c)
