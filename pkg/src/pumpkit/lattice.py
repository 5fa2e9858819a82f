"""Superlattice band structure, Rice-Mele extraction and pump topology.

Lengths are measured in units of the wavelength lambda, quasimomenta in
units of k = 2 pi / lambda and energies in recoil units.  The unit cell of
the pumped superlattice has length lambda and holds two sites spaced
d = lambda / 2.

Site-index axis
---------------
Positions reported in *site units* run along -x of the optical potential.
With that orientation the ground band of an increasing superlattice phase is
transported towards larger site index, which is the chirality convention of
the circuit engine (ground band = chirality +1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, ModelMismatchError, TopologyUndefinedError
from .units import DEFAULT_WAVELENGTH, POTASSIUM_40_MASS, recoil_frequency

# Wannier centres (in cells, along +x) of the two sites of the t_x double well.
# The bond t_x sits across x = lambda/2; its left site on the site-index axis
# is the one at x = 3 lambda / 4.
_SITE_LEFT_X = 0.75
_SITE_RIGHT_X = 0.25


@dataclass(frozen=True)
class LatticePotential:
    """Lattice depths in E_rec, imbalance factor and short-lattice phase."""

    V_X: float
    V_Xint: float
    V_Z: float
    I_XZ: float = 0.777
    theta: float = math.pi
    wavelength: float = DEFAULT_WAVELENGTH
    V_Y: float = 0.0
    mass: float = POTASSIUM_40_MASS

    def __post_init__(self):
        for name in ("V_X", "V_Xint", "V_Z", "V_Y"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.I_XZ <= 1.0:
            raise ValueError(f"I_XZ must lie in [0, 1], got {self.I_XZ}")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")

    @property
    def recoil_hz(self) -> float:
        return recoil_frequency(self.mass, self.wavelength)


# Depth sets of the experiment (V_X, V_Xint, V_Y, V_Z) in E_rec.
TABLE_A1 = {
    "fig2bc": dict(V_X=7.539, V_Xint=0.256, V_Y=32.35, V_Z=29.42),
    "fig2f": dict(V_X=7.484, V_Xint=0.2521, V_Y=27.047, V_Z=27.191),
    "fig2g": dict(V_X=(4.555, 8.40), V_Xint=0.2500, V_Y=26.988, V_Z=27.50),
    "fig3": dict(V_X=7.603, V_Xint=0.261, V_Y=27.02, V_Z=27.03),
    "fig4": dict(V_X=(6.012, 7.484), V_Xint=0.249, V_Y=27.05, V_Z=27.20),
}


def table_potential(name: str, V_X: float | None = None, **overrides) -> LatticePotential:
    """LatticePotential for a named depth set; scanned sets need ``V_X``."""
    row = dict(TABLE_A1[name])
    if isinstance(row["V_X"], tuple):
        if V_X is None:
            raise ValueError(f"depth set {name!r} scans V_X; pass V_X explicitly")
    if V_X is not None:
        row["V_X"] = V_X
    row.update(overrides)
    return LatticePotential(**row)


@dataclass(frozen=True)
class Potential1D:
    """Fourier content of the x potential on the z = 0 slice.

    V(x) = -V_X cos^2(kx + theta/2) - V_Xint cos^2(kx)
           - long_plus cos(kx + phi) - long_minus cos(kx - phi)
    """

    V_X: float
    theta: float
    V_Xint: float
    long_plus: float
    long_minus: float
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def is_static(self) -> bool:
        return self.long_plus == 0.0 and self.long_minus == 0.0

    def fourier(self, phi: float) -> tuple[complex, complex]:
        """Coefficients of exp(i k x) and exp(2 i k x); the constant is dropped."""
        v1 = -0.5 * (self.long_plus * np.exp(1j * phi) + self.long_minus * np.exp(-1j * phi))
        v2 = -0.25 * self.V_X * np.exp(1j * self.theta) - 0.25 * self.V_Xint
        return complex(v1), complex(v2)

    def __call__(self, x, phi: float):
        """Potential at positions ``x`` (units of lambda), constant included."""
        kx = 2 * np.pi * np.asarray(x, dtype=float)
        return (
            -self.V_X * np.cos(kx + self.theta / 2) ** 2
            - self.V_Xint * np.cos(kx) ** 2
            - self.long_plus * np.cos(kx + phi)
            - self.long_minus * np.cos(kx - phi)
        )


def reduce_to_1d(potential: LatticePotential) -> Potential1D:
    """Evaluate the 3D potential on the z = 0 antinode (cos kz = 1)."""
    amp = math.sqrt(potential.V_Xint * potential.V_Z)
    return Potential1D(
        V_X=potential.V_X,
        theta=potential.theta,
        V_Xint=potential.V_Xint,
        long_plus=amp,
        long_minus=potential.I_XZ * amp,
        metadata={
            "reduction": "z-slice at cos(kz)=1; y and z motion frozen",
            "V_Y_ignored": potential.V_Y,
        },
    )


@dataclass(frozen=True)
class PumpSchedule:
    """Linear ramp phi_SL(u) = direction * 2 pi u + phase0, u = tau / T."""

    period: float
    direction: int = 1
    phase0: float = math.pi
    n_samples: int = 256

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.n_samples < 4:
            raise ValueError("n_samples must be >= 4")

    def taus(self) -> np.ndarray:
        """Sample times in units of T, covering [0, 1)."""
        return np.arange(self.n_samples) / self.n_samples

    def phase(self, u):
        return self.direction * 2 * np.pi * np.asarray(u) + self.phase0


@dataclass
class BandSolution:
    phi: float
    q: np.ndarray  # (nq,) in units of k, uniform over one zone
    energies: np.ndarray  # (nq, n_bands)
    vectors: np.ndarray  # (nq, n_pw, n_bands)
    n_max: int  # plane waves exp(i (q + n) k x), |n| <= n_max

    @property
    def cutoff(self) -> int:
        return 2 * self.n_max + 1

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]


@dataclass(frozen=True)
class RiceMeleSample:
    tau: float
    t_x: float
    t_x_prime: float
    Delta: float
    offset: float = 0.0
    residual: float = 0.0


@dataclass
class WannierOrbital:
    weights: np.ndarray  # probability per site, ordered along the site axis
    sites: np.ndarray  # site coordinates of the weights
    center: float  # site units
    band: int = 0


def _bloch_matrices(pot: Potential1D, phi: float, q: np.ndarray, n_max: int) -> np.ndarray:
    n = np.arange(-n_max, n_max + 1)
    v1, v2 = pot.fourier(phi)
    size = n.size
    base = np.zeros((size, size), dtype=complex)
    # H[n, m] = V_{n - m}
    base += np.diag(np.full(size - 1, v1), -1) + np.diag(np.full(size - 1, np.conj(v1)), 1)
    base += np.diag(np.full(size - 2, v2), -2) + np.diag(np.full(size - 2, np.conj(v2)), 2)
    h = np.broadcast_to(base, (q.size, size, size)).copy()
    idx = np.arange(size)
    h[:, idx, idx] = (q[:, None] + n[None, :]) ** 2
    return h


def quasimomentum_grid(nq: int) -> np.ndarray:
    return -0.5 + np.arange(nq) / nq


def solve_bloch(
    pot: Potential1D,
    phi: float,
    n_max: int = 12,
    nq: int = 32,
    n_bands: int = 4,
    check_convergence: bool = False,
) -> BandSolution:
    """Plane-wave diagonalisation of the superlattice at phase ``phi``."""
    if 2 * n_max + 1 < 16:
        raise ValueError("cutoff must include at least 16 plane waves (n_max >= 8)")
    q = quasimomentum_grid(nq)
    h = _bloch_matrices(pot, phi, q, n_max)
    try:
        energies, vectors = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"Bloch eigensolver failed at phi={phi:.6g}: {exc}") from exc
    sol = BandSolution(phi, q, energies[:, :n_bands], vectors[:, :, :n_bands], n_max)
    if check_convergence:
        fine = solve_bloch(pot, phi, 2 * n_max, nq, n_bands)
        change = np.max(np.abs(fine.energies - sol.energies))
        if change >= 1e-8:
            raise ConvergenceError(
                f"band energies changed by {change:.3e} E_rec on doubling the cutoff"
            )
    return sol


def _overlap_blocks(sol: BandSolution, bands) -> np.ndarray:
    """Unitarised overlaps <u_{j+1}|u_j> for the band subset, periodic in j."""
    v = sol.vectors[:, :, list(bands)]
    nxt = np.roll(v, -1, axis=0)
    # u at q + G has coefficients c_{n+1}(q)
    shifted = np.roll(v[0], -1, axis=0)
    shifted[-1] = 0.0
    nxt[-1] = shifted
    m = np.einsum("jpa,jpb->jab", nxt.conj(), v)
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def _position_eigenbasis(sol: BandSolution, bands):
    """Eigenvectors of the projected position operator exp(2 pi i x / L).

    Returns centres (cells, along +x, in (-L/2, L/2]) and the eigenvectors
    in the (j, band) product basis.
    """
    nb = len(bands)
    nq = sol.q.size
    blocks = _overlap_blocks(sol, bands)
    z = np.zeros((nq * nb, nq * nb), dtype=complex)
    for j in range(nq):
        jn = (j + 1) % nq
        z[jn * nb:(jn + 1) * nb, j * nb:(j + 1) * nb] = blocks[j]
    t, vecs = scipy.linalg.schur(z, output="complex")
    centers = nq * np.angle(np.diag(t)) / (2 * np.pi)
    return centers, vecs


def _nearest(centers, x, nq):
    d = (centers - x + nq / 2) % nq - nq / 2
    return int(np.argmin(np.abs(d)))


def _site_hamiltonian(sol: BandSolution):
    """Two-band Wannier basis and the tight-binding matrix in it."""
    centers, vecs = _position_eigenbasis(sol, (0, 1))
    diag = sol.energies[:, :2].reshape(-1)
    h = vecs.conj().T @ (diag[:, None] * vecs)
    return centers, vecs, h


def _rice_mele_bands(q, t, tp, delta, offset=0.0):
    root = np.sqrt(delta**2 + t**2 + tp**2 + 2 * t * tp * np.cos(2 * np.pi * q))
    return np.stack([offset - root, offset + root], axis=-1)


@dataclass(frozen=True)
class RiceMeleSpectrum:
    """Synthetic two-band data in the site basis (left, right of the t_x bond).

    ``h`` holds the 2x2 Bloch Hamiltonians h(q) with the gauge
    h_LR(q) = -(t_x + t_x' exp(-2 pi i q)).
    """

    q: np.ndarray
    h: np.ndarray

    @classmethod
    def from_parameters(cls, t_x, t_x_prime, Delta, nq=32, offset=0.0):
        q = quasimomentum_grid(nq)
        h = np.zeros((nq, 2, 2), dtype=complex)
        h[:, 0, 0] = offset + Delta
        h[:, 1, 1] = offset - Delta
        h[:, 0, 1] = -(t_x + t_x_prime * np.exp(-2j * np.pi * q))
        h[:, 1, 0] = np.conj(h[:, 0, 1])
        return cls(q, h)

    @property
    def energies(self):
        return np.linalg.eigvalsh(self.h)


def extract_tight_binding(
    source,
    tau: float = 0.0,
    tolerance: float = 0.05,
) -> RiceMeleSample:
    """Rice-Mele parameters of the two lowest bands.

    ``source`` is a :class:`BandSolution` (continuum bands, Wannierised in
    the two-band subspace) or a :class:`RiceMeleSpectrum`.  The dispersion
    of the returned parameters is compared with the input bands; a maximal
    deviation above ``tolerance`` times the two-band energy spread raises
    :class:`ModelMismatchError`.
    """
    if isinstance(source, RiceMeleSpectrum):
        q, energies = source.q, source.energies
        nq = q.size
        phase = np.exp(2j * np.pi * q)
        # Fourier components of h_LR: R = 0 -> -t_x, R = -1 -> -t_x'
        t = abs(np.mean(source.h[:, 0, 1]))
        tp = abs(np.mean(source.h[:, 0, 1] * phase))
        eps_l = float(np.mean(source.h[:, 0, 0].real))
        eps_r = float(np.mean(source.h[:, 1, 1].real))
    else:
        if source.n_bands < 3:
            raise ValueError("need at least three bands to check band separation")
        nq = source.q.size
        gap_up = np.min(source.energies[:, 2]) - np.max(source.energies[:, 1])
        if gap_up <= 0:
            raise ModelMismatchError("two lowest bands overlap higher bands", residual=np.inf)
        centers, _, h = _site_hamiltonian(source)
        left = _nearest(centers, _SITE_LEFT_X, nq)
        right = _nearest(centers, _SITE_RIGHT_X, nq)
        left_prev = _nearest(centers, _SITE_LEFT_X - 1.0, nq)
        t = abs(h[left, right])
        tp = abs(h[right, left_prev])
        eps_l = float(h[left, left].real)
        eps_r = float(h[right, right].real)
        q, energies = source.q, source.energies[:, :2]
    delta = 0.5 * (eps_l - eps_r)
    offset = 0.5 * (eps_l + eps_r)
    model = _rice_mele_bands(q, t, tp, delta, offset)
    spread = float(np.max(energies) - np.min(energies))
    residual = float(np.max(np.abs(model - energies)))
    if spread > 0 and residual > tolerance * spread:
        raise ModelMismatchError(
            f"Rice-Mele dispersion misses the bands by {residual:.3e} E_rec "
            f"({residual / spread:.2%} of the two-band spread)",
            residual=residual,
        )
    return RiceMeleSample(float(tau), float(t), float(tp), float(delta), float(offset), residual)


@dataclass
class ScheduleTable:
    """Rice-Mele parameters and superexchange sampled over one pump period.

    ``tau`` is in units of T; energies are in E_rec.
    """

    tau: np.ndarray
    t_x: np.ndarray
    t_x_prime: np.ndarray
    Delta: np.ndarray
    Jex: np.ndarray
    period: float
    recoil_hz: float
    metadata: dict = field(default_factory=dict)

    @property
    def jex_hz(self) -> np.ndarray:
        return self.Jex * self.recoil_hz

    def with_period(self, period: float) -> "ScheduleTable":
        meta = dict(self.metadata, period_s=period)
        return replace(self, period=period, metadata=meta)

    def rows(self):
        for i in range(self.tau.size):
            yield self.tau[i], self.t_x[i], self.t_x_prime[i], self.Delta[i], self.Jex[i]


def build_schedule(
    potential: LatticePotential,
    pump: PumpSchedule,
    U: float | None,
    n_max: int = 12,
    nq: int = 32,
    tolerance: float = 0.05,
) -> ScheduleTable:
    """Sample t_x, t_x', Delta and J_ex over one period.

    ``U`` is the on-site interaction in E_rec; ``None`` leaves the J_ex
    column as NaN (non-interacting shuttle regime).
    """
    from .gates import DoubleWellParams, jex_exact

    pot = reduce_to_1d(potential)
    taus = pump.taus()
    cols = np.zeros((4, taus.size))
    for i, u in enumerate(taus):
        sol = solve_bloch(pot, float(pump.phase(u)), n_max=n_max, nq=nq, n_bands=3)
        s = extract_tight_binding(sol, tau=u, tolerance=tolerance)
        cols[:, i] = s.t_x, s.t_x_prime, s.Delta, np.nan
        if U is not None:
            cols[3, i] = jex_exact(DoubleWellParams(s.t_x, s.Delta, U))
    meta = {
        "V_X": potential.V_X,
        "V_Xint": potential.V_Xint,
        "V_Z": potential.V_Z,
        "I_XZ": potential.I_XZ,
        "theta": potential.theta,
        "wavelength_m": potential.wavelength,
        "U": U,
        "period_s": pump.period,
        "direction": pump.direction,
        "phase0": pump.phase0,
        "n_max": n_max,
        "cutoff_plane_waves": 2 * n_max + 1,
        "nq": nq,
        "units": {"tau": "T", "t_x": "E_rec", "t_x_prime": "E_rec", "Delta": "E_rec", "Jex": "E_rec"},
        "recoil_hz": potential.recoil_hz,
        **pot.metadata,
    }
    return ScheduleTable(taus, cols[0], cols[1], cols[2], cols[3], pump.period, potential.recoil_hz, meta)


def _polarization(sol: BandSolution, band: int) -> float:
    """Centre of the hybrid Wannier function of one band, in cells along +x."""
    blocks = _overlap_blocks(sol, (band,))
    loop = np.prod(blocks[:, 0, 0])
    return float(np.angle(loop) / (2 * np.pi))


def wannier_center_winding(
    potential: LatticePotential,
    pump: PumpSchedule,
    bands=(0, 1),
    n_phase: int = 128,
    n_max: int = 12,
    nq: int = 32,
    gap_threshold: float = 1e-6,
) -> dict[int, float]:
    """Displacement per pump period (site units) of each band's Wannier centre."""
    pot = reduce_to_1d(potential)
    if pot.is_static:
        return {b: 0.0 for b in bands}
    n_bands = max(bands) + 2
    phases = pump.phase(np.arange(n_phase + 1) / n_phase)
    centers = np.zeros((len(bands), n_phase + 1))
    emin, emax, min_gap = np.inf, -np.inf, np.inf
    for k, phi in enumerate(phases):
        sol = solve_bloch(pot, float(phi), n_max=n_max, nq=nq, n_bands=n_bands)
        e = sol.energies
        emin = min(emin, e[:, : max(bands) + 1].min())
        emax = max(emax, e[:, : max(bands) + 1].max())
        for b in bands:
            gaps = [e[:, b + 1] - e[:, b]]
            if b > 0:
                gaps.append(e[:, b] - e[:, b - 1])
            min_gap = min(min_gap, min(float(g.min()) for g in gaps))
        for i, b in enumerate(bands):
            centers[i, k] = _polarization(sol, b)
    if min_gap < gap_threshold * (emax - emin):
        raise TopologyUndefinedError(
            f"band gap closes along the cycle (min gap {min_gap:.3e} E_rec)"
        )
    out = {}
    for i, b in enumerate(bands):
        unwrapped = np.unwrap(2 * np.pi * centers[i]) / (2 * np.pi)
        # one cell = two sites; the site axis points along -x
        out[b] = float(-2.0 * (unwrapped[-1] - unwrapped[0]))
    return out


def ground_orbital(sol: BandSolution) -> WannierOrbital:
    """Ground-band Wannier orbital resolved on the two-band site orbitals."""
    nq = sol.q.size
    c1, v1 = _position_eigenbasis(sol, (0,))
    c2, v2, _ = _site_hamiltonian(sol)
    k = _nearest(c1, 0.5, nq)
    w = np.zeros(2 * nq, dtype=complex)
    w[0::2] = v1[:, k]
    weights = np.abs(v2.conj().T @ w) ** 2
    # site coordinates along the site axis, relative to the orbital centre
    centre_x = c1[k]
    rel = (c2 - centre_x + nq / 2) % nq - nq / 2
    sites = -2.0 * rel
    order = np.argsort(sites)
    return WannierOrbital(weights[order], sites[order], float(-2.0 * centre_x), band=0)


def orbital_double_occupancy(orbital: WannierOrbital | np.ndarray) -> float:
    """Probability that two atoms sharing the orbital sit on the same site."""
    p = np.asarray(getattr(orbital, "weights", orbital), dtype=float)
    total = p.sum()
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"orbital weights must sum to 1, got {total:.12g}")
    return float(np.sum(p**2))


def double_occupancy_along_schedule(potential: LatticePotential, pump: PumpSchedule, **kw) -> np.ndarray:
    pot = reduce_to_1d(potential)
    return np.array(
        [orbital_double_occupancy(ground_orbital(solve_bloch(pot, float(pump.phase(u)), **kw)))
         for u in pump.taus()]
    )
