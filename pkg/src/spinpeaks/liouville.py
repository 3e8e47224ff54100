"""Master-equation engine for the velocity ensemble of 87Rb D1 density matrices.

Two fidelity tiers share the same physics:

``full``
    Every velocity node carries a complete 16x16 density matrix including the
    optical coherences, integrated in the frame rotating at the pump carrier.
    The decoherence rate of the optical coherences forces time steps of order
    picoseconds, so this tier is only practical for short validation windows.

``reduced``
    Optical coherences and the excited manifold are slaved to the ground
    state (both relax orders of magnitude faster than anything the ground
    spins do) and velocity mixing is taken in its fast limit, so all nodes
    share one ground matrix. What remains is an affine, time-periodic linear
    system on the hyperfine-diagonal part of the ground density matrix
    (9 + 25 complex entries) whose optical-pumping part is averaged over the
    velocity nodes. Because the system is linear, one drive period of RK4 is
    an affine map; iterating that map is the same arithmetic as stepping the
    state period after period, only cheaper.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import constants as sc

from .atom import BLOCKS, EXCITED, GROUND, AtomSystem, build_atom_system, equilibrium_state
from .fields import DriveConfig, PumpConfig, field_at, harmonic_decomposition, pump_positive_frequency
from .observables import StroboscopicRecord

__all__ = [
    "RelaxationRates",
    "SpinProblem",
    "StiffnessError",
    "VelocityEnsembleState",
    "ReducedModel",
    "PeriodicAffineSystem",
    "evolve",
    "evolve_to_steady",
    "generator_full",
    "generator_reduced",
    "hamiltonian",
    "initial_state",
    "mapping_D",
    "mapping_M",
    "mapping_R",
    "max_dt",
    "step",
    "velocity_nodes",
]

TWO_PI = 2 * np.pi
STEADY_TOL = 1e-6
TIERS = ("full", "reduced")


class StiffnessError(RuntimeError):
    """Raised when a step visibly breaks trace conservation."""


@dataclass(frozen=True)
class RelaxationRates:
    """Relaxation rates as decay constants in 1/s.

    Configuration files give them in Hz; :meth:`from_hz` multiplies by 2*pi.
    """

    Gamma: float = TWO_PI * 1e3
    delta_mix: float = TWO_PI * 1e9
    delta_dcy: float = TWO_PI * 1e8
    delta_dec: float = TWO_PI * 1e10

    def __post_init__(self):
        for name in ("Gamma", "delta_mix", "delta_dcy", "delta_dec"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for msg in self.ordering_warnings():
            warnings.warn(msg, stacklevel=3)

    @classmethod
    def from_hz(cls, Gamma=1e3, delta_mix=1e9, delta_dcy=1e8, delta_dec=1e10) -> "RelaxationRates":
        return cls(TWO_PI * Gamma, TWO_PI * delta_mix, TWO_PI * delta_dcy, TWO_PI * delta_dec)

    def ordering_warnings(self) -> list[str]:
        out = []
        if not self.Gamma < self.delta_dcy < self.delta_dec:
            out.append("relaxation rates violate Gamma << delta_dcy << delta_dec")
        return out

    def with_gamma(self, Gamma: float) -> "RelaxationRates":
        return replace(self, Gamma=Gamma)


@dataclass
class VelocityEnsembleState:
    v: np.ndarray
    weights: np.ndarray
    rho: np.ndarray  # (n_nodes, 16, 16)
    t: float = 0.0

    def mean_rho(self) -> np.ndarray:
        return np.einsum("a,aij->ij", self.weights, self.rho)

    def copy(self) -> "VelocityEnsembleState":
        return VelocityEnsembleState(self.v.copy(), self.weights.copy(), self.rho.copy(), self.t)

    def diagnostics(self) -> dict:
        herm = np.abs(self.rho - self.rho.conj().swapaxes(-1, -2)).max()
        tr = np.abs(np.trace(self.rho, axis1=-2, axis2=-1) - 1).max()
        h = 0.5 * (self.rho + self.rho.conj().swapaxes(-1, -2))
        min_eig = float(np.linalg.eigvalsh(h).min())
        return {
            "hermiticity": float(herm),
            "trace_error": float(tr),
            "min_eigenvalue": min_eig,
            "weights_error": float(abs(self.weights.sum() - 1)),
        }


def velocity_nodes(sys: AtomSystem, temperature_k: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes for the 1-D Maxwell-Boltzmann marginal of v_z."""
    if n < 1:
        raise ValueError("need at least one velocity node")
    x, w = np.polynomial.hermite.hermgauss(n)
    u = sys.thermal_speed_factor * math.sqrt(temperature_k)
    return u * x, w / math.sqrt(math.pi)


@dataclass(frozen=True, eq=False)
class SpinProblem:
    """Everything that defines one master-equation run except the tier."""

    drive: DriveConfig = field(default_factory=DriveConfig)
    pump: PumpConfig = field(default_factory=PumpConfig)
    rates: RelaxationRates = field(default_factory=RelaxationRates)
    sys: AtomSystem = field(default_factory=build_atom_system)
    temperature_k: float = 353.15
    n_velocity: int = 8

    @cached_property
    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return velocity_nodes(self.sys, self.temperature_k, self.n_velocity)

    @cached_property
    def rho0(self) -> np.ndarray:
        return equilibrium_state(self.sys)

    @cached_property
    def coupling(self) -> np.ndarray:
        """V_eg = -(E/2) P_e (d . l+) P_g / hbar, the 8x8 excited-ground block (rad/s)."""
        env = pump_positive_frequency(self.pump)
        amp = np.linalg.norm(env)  # polarization is fixed sigma+; dipole already is d . l+
        return -amp * self.sys.dipole[EXCITED, GROUND] / sc.hbar

    @cached_property
    def static_hamiltonians(self) -> np.ndarray:
        """H0 (with Doppler shift) + V_E for each velocity node, shape (n, 16, 16)."""
        v, _ = self.nodes
        return _static_hamiltonian(v, self)

    @cached_property
    def zeeman(self) -> np.ndarray:
        return self.sys.zeeman_operators()

    @cached_property
    def full_kernel(self) -> "_FullKernel":
        return _FullKernel(self)

    @cached_property
    def full_runner(self):
        from .fullrun import FullRunner

        return FullRunner(self)

    @cached_property
    def reduced(self) -> "ReducedModel":
        return ReducedModel(self)

    def replace(self, **kw) -> "SpinProblem":
        return replace(self, **kw)

    def with_omega(self, Omega: float) -> "SpinProblem":
        return replace(self, drive=self.drive.with_omega(Omega))

    def with_gamma(self, Gamma: float) -> "SpinProblem":
        return replace(self, rates=self.rates.with_gamma(Gamma))


def initial_state(problem: SpinProblem) -> VelocityEnsembleState:
    v, w = problem.nodes
    rho = np.broadcast_to(problem.rho0, (len(v), 16, 16)).astype(complex)
    return VelocityEnsembleState(v.copy(), w.copy(), rho, problem.drive.phase_origin)


def _static_hamiltonian(v, problem: SpinProblem) -> np.ndarray:
    sys = problem.sys
    v = np.atleast_1d(np.asarray(v, dtype=float))
    H = np.zeros((len(v), 16, 16), dtype=complex)
    diag = np.broadcast_to(sys.energies, (len(v), 16)).copy()
    # rotating frame: excited energies minus carrier; Doppler shifts the carrier seen by the atom
    diag[:, EXCITED] += -problem.pump.detuning + sys.wavenumber * v[:, None]
    idx = np.arange(16)
    H[:, idx, idx] = diag
    V = problem.coupling
    H[:, EXCITED, GROUND] += V
    H[:, GROUND, EXCITED] += V.conj().T
    return H


def hamiltonian(t: float, v_z, problem: SpinProblem) -> np.ndarray:
    """Rotating-frame Hamiltonian (rad/s) for one velocity or an array of them."""
    scalar = np.ndim(v_z) == 0
    H = _static_hamiltonian(v_z, problem)
    B = field_at(t, problem.drive)
    H += np.einsum("a,aij->ij", B, problem.zeeman)
    return H[0] if scalar else H


def mapping_M(rho: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """rho_i minus the weighted velocity average, for every node."""
    return rho - np.einsum("a,aij->ij", weights, rho)


def mapping_D(rho: np.ndarray, sys: AtomSystem | None = None) -> np.ndarray:
    """Optical-coherence part P_e rho P_g + P_g rho P_e."""
    out = np.zeros_like(rho)
    out[..., EXCITED, GROUND] = rho[..., EXCITED, GROUND]
    out[..., GROUND, EXCITED] = rho[..., GROUND, EXCITED]
    return out


def nuclear_repopulation(rho_ee: np.ndarray, cg_map: np.ndarray) -> np.ndarray:
    """Ground matrix rho'_n x (1/2) for an excited-manifold matrix (both 8x8, coupled basis).

    The excited electron is traced out in the uncoupled |m_I, m_J> basis and the
    nucleus is recombined with a maximally mixed ground electron.
    """
    C = cg_map
    unc = C.T @ rho_ee @ C
    shape = unc.shape[:-2]
    rho_n = np.einsum("...iaja->...ij", unc.reshape(*shape, 4, 2, 4, 2))
    g = 0.5 * np.einsum("...ij,ab->...iajb", rho_n, np.eye(2)).reshape(*shape, 8, 8)
    return C @ g @ C.T


def mapping_R(rho: np.ndarray, sys: AtomSystem) -> np.ndarray:
    """P_e rho P_e minus the nuclear-spin-preserving ground product state.

    Applied as -delta_dcy * R, it empties the excited manifold into the ground
    manifold without touching the nuclear spin.
    """
    out = np.zeros_like(rho)
    ee = rho[..., EXCITED, EXCITED]
    out[..., EXCITED, EXCITED] = ee
    out[..., GROUND, GROUND] = -nuclear_repopulation(ee, sys.cg_map)
    return out


def generator_full(state: VelocityEnsembleState, t: float, problem: SpinProblem) -> np.ndarray:
    """d rho_i / dt for every velocity node (full tier)."""
    r = problem.rates
    B = field_at(t, problem.drive)
    H = problem.static_hamiltonians + np.einsum("a,aij->ij", B, problem.zeeman)
    rho = state.rho
    out = -1j * (H @ rho - rho @ H)
    out -= r.Gamma * (rho - problem.rho0)
    if r.delta_mix:
        out -= r.delta_mix * mapping_M(rho, state.weights)
    out -= r.delta_dcy * mapping_R(rho, problem.sys)
    out -= r.delta_dec * mapping_D(rho)
    return out


def repopulation_matrix(cg_map: np.ndarray) -> np.ndarray:
    """Matrix A with vec(nuclear_repopulation(e)) = A @ vec(e) for row-major flattened 8x8 blocks."""
    basis = np.eye(64).reshape(64, 8, 8)
    return nuclear_repopulation(basis, cg_map).reshape(64, 64).T


class _FullKernel:
    """Allocation-light right-hand side of the full tier for Hermitian states."""

    def __init__(self, problem: SpinProblem):
        r = problem.rates
        self.r = r
        self.drive = problem.drive
        H0 = problem.static_hamiltonians
        idx = np.arange(16)
        # only the diagonal (Doppler-shifted energies) differs between nodes
        self.diag = H0[:, idx, idx].real.copy()
        self.W = H0[0].copy()
        self.W[idx, idx] = 0.0
        self.Zg = problem.zeeman[:, GROUND, GROUND]
        self.rho0 = problem.rho0
        self.w = problem.nodes[1]
        self.R = repopulation_matrix(problem.sys.cg_map).astype(complex)

    def __call__(self, rho: np.ndarray, t: float) -> np.ndarray:
        r = self.r
        W = self.W.copy()
        W[GROUND, GROUND] += np.tensordot(field_at(t, self.drive), self.Zg, 1)
        n = len(rho)
        Hr = (W @ rho.transpose(1, 0, 2).reshape(16, -1)).reshape(16, n, 16).transpose(1, 0, 2)
        Hr += self.diag[:, :, None] * rho
        out = -1j * (Hr - Hr.conj().swapaxes(-1, -2))  # [H, rho] for Hermitian rho
        out -= r.Gamma * (rho - self.rho0)
        if r.delta_mix:
            out -= r.delta_mix * (rho - np.tensordot(self.w, rho, 1))
        ee = rho[:, EXCITED, EXCITED]
        out[:, EXCITED, EXCITED] -= r.delta_dcy * ee
        out[:, GROUND, GROUND] += r.delta_dcy * (ee.reshape(-1, 64) @ self.R.T).reshape(-1, 8, 8)
        out[:, EXCITED, GROUND] -= r.delta_dec * rho[:, EXCITED, GROUND]
        out[:, GROUND, EXCITED] -= r.delta_dec * rho[:, GROUND, EXCITED]
        return out


class ReducedModel:
    """Ground-state effective generator with optical coherences and excited
    manifold adiabatically eliminated.

    Vector layout: the 9 entries of the F=1 block followed by the 25 entries of
    the F=2 block (row-major). Hyperfine coherences between F=1 and F=2 rotate
    at the ground splitting and are dropped.
    """

    def __init__(self, problem: SpinProblem):
        self.problem = problem
        sys, r = problem.sys, problem.rates
        rows, cols = [], []
        for n in (1, 2):
            blk = BLOCKS["ground", n]
            for i in range(blk.start, blk.stop):
                for j in range(blk.start, blk.stop):
                    rows.append(i)
                    cols.append(j)
        self.rows = np.array(rows)
        self.cols = np.array(cols)
        self.n = len(rows)

        V = problem.coupling
        self.rabi = 2 * float(np.abs(V).max())
        if r.delta_dec <= 0 or self.rabi >= r.delta_dec / 10:
            raise ValueError(
                f"reduced tier needs Rabi frequency << delta_dec (Rabi {self.rabi:.3g} rad/s, "
                f"delta_dec {r.delta_dec:.3g} 1/s)"
            )
        v, w = problem.nodes
        e_exc = sys.energies[EXCITED] - problem.pump.detuning
        e_gnd = sys.energies[GROUND]
        D = r.delta_dec + r.Gamma + r.delta_mix
        detune = e_exc[None, :, None] + sys.wavenumber * v[:, None, None] - e_gnd[None, None, :]
        Lbar = np.einsum("a,aij->ij", w, 1.0 / (D + 1j * detune))
        self.K = Lbar / (1 - r.delta_mix * Lbar)
        self.E = 1.0 / (r.delta_dcy + 1j * (e_exc[:, None] - e_exc[None, :]))
        self.V = V

        basis = np.zeros((self.n, 8, 8), dtype=complex)
        basis[np.arange(self.n), self.rows, self.cols] = 1.0
        self.L_const = self._matrix(self._dissipative, basis) - r.Gamma * np.eye(self.n)
        self.source = r.Gamma * self.vec(problem.rho0[GROUND, GROUND])
        Zg = problem.zeeman[:, GROUND, GROUND]
        self.Z = np.stack([self._matrix(lambda s, op=op: -1j * (op @ s - s @ op), basis) for op in Zg])

    def _matrix(self, f, basis) -> np.ndarray:
        return np.stack([self.vec(f(b)) for b in basis], axis=1)

    def vec(self, sigma: np.ndarray) -> np.ndarray:
        return sigma[..., self.rows, self.cols]

    def unvec(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape[:-1] + (8, 8), dtype=complex)
        out[..., self.rows, self.cols] = x
        return out

    def coherences(self, sigma: np.ndarray) -> np.ndarray:
        """Velocity-averaged quasi-steady optical coherence rho_eg."""
        return self.K * (-1j * (self.V @ sigma))

    def excited(self, sigma: np.ndarray) -> np.ndarray:
        """Quasi-steady excited-manifold matrix."""
        return self.E * self._excitation(sigma)

    def _excitation(self, sigma):
        V = self.V
        X = self.K * (-1j * (V @ sigma))
        Y = self.K.conj().T * (1j * (sigma @ V.conj().T))  # X^dagger for Hermitian sigma
        return -1j * (V @ Y - X @ V.conj().T)

    def _dissipative(self, sigma):
        V = self.V
        X = self.K * (-1j * (V @ sigma))
        Y = self.K.conj().T * (1j * (sigma @ V.conj().T))
        pump = -1j * (V.conj().T @ X - Y @ V)
        rho_ee = self.E * (-1j * (V @ Y - X @ V.conj().T))
        repop = self.problem.rates.delta_dcy * nuclear_repopulation(rho_ee, self.problem.sys.cg_map)
        return pump + repop

    def pump_rates(self) -> np.ndarray:
        """Excitation rate (1/s) out of each ground sublevel, ordered as the basis."""
        out = np.empty(8)
        for k in range(8):
            s = np.zeros((8, 8), dtype=complex)
            s[k, k] = 1
            out[k] = np.trace(self._excitation(s)).real
        return out

    @cached_property
    def effective_rate(self) -> float:
        """Fastest decay rate of the time-independent part (1/s)."""
        return float(np.abs(np.linalg.eigvals(self.L_const).real).max())

    @cached_property
    def default_system(self) -> "PeriodicAffineSystem":
        return self.system()

    def system(self, drive: DriveConfig | None = None) -> "PeriodicAffineSystem":
        drive = drive or self.problem.drive
        static, harmonics = harmonic_decomposition(drive)
        A0 = self.L_const + np.einsum("a,aij->ij", static, self.Z)
        Ak = [(k, np.einsum("a,aij->ij", vec, self.Z)) for k, vec in harmonics]
        return PeriodicAffineSystem(A0, Ak, self.source, drive.Omega, drive.phase_origin)

    def observables(self) -> np.ndarray:
        """Rows mapping the state vector to (S1x, S1y, S1z, S2x, S2y, S2z)."""
        sys = self.problem.sys
        O = np.zeros((6, self.n), dtype=complex)
        for n, off in ((1, 0), (2, 3)):
            for a, op in enumerate(sys.Fops[n]):
                full = np.zeros((8, 8), dtype=complex)
                blk = BLOCKS["ground", n]
                full[blk, blk] = op.T
                O[off + a] = self.vec(full)
        return O


@dataclass
class PeriodicAffineSystem:
    """dx/dt = (A0 + sum_k cos(k W (t - t0)) A_k) x + b."""

    A0: np.ndarray
    harmonics: list
    b: np.ndarray
    Omega: float
    t0: float = 0.0

    def __post_init__(self):
        n = len(self.b)
        self.n = n
        self._A0 = np.zeros((n + 1, n + 1), dtype=complex)
        self._A0[:n, :n] = self.A0
        self._A0[:n, n] = self.b
        self._Ak = []
        for k, A in self.harmonics:
            M = np.zeros((n + 1, n + 1), dtype=complex)
            M[:n, :n] = A
            self._Ak.append((k, M))

    @property
    def period(self) -> float:
        return TWO_PI / self.Omega

    def augmented(self, t: float) -> np.ndarray:
        G = self._A0.copy()
        ph = self.Omega * (t - self.t0)
        for k, M in self._Ak:
            G += math.cos(k * ph) * M
        return G

    def rk4(self, Y: np.ndarray, t: float, h: float) -> np.ndarray:
        G1 = self.augmented(t)
        G2 = self.augmented(t + 0.5 * h)
        G3 = self.augmented(t + h)
        k1 = G1 @ Y
        k2 = G2 @ (Y + 0.5 * h * k1)
        k3 = G2 @ (Y + 0.5 * h * k2)
        k4 = G3 @ (Y + h * k3)
        return Y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def period_map(self, t_start: float, steps: int, sample_every: int, observe: np.ndarray):
        """RK4 propagator over one period plus observation maps at the samples.

        Returns ``(Phi, obs)`` with Phi of shape (n+1, n+1) acting on [x; 1]
        and obs of shape (steps // sample_every, rows, n+1).
        """
        n = self.n
        h = self.period / steps
        Y = np.eye(n + 1, dtype=complex)
        Oaug = np.zeros((observe.shape[0], n + 1), dtype=complex)
        Oaug[:, :n] = observe
        obs = []
        for i in range(steps):
            if i % sample_every == 0:
                obs.append(Oaug @ Y)
            Y = self.rk4(Y, t_start + i * h, h)
        return Y, np.array(obs)

    def fixed_point(self, Phi: np.ndarray) -> np.ndarray:
        """Periodic orbit start x* = Phi x* (direct solve, used as a cross-check)."""
        n = self.n
        A = np.eye(n) - Phi[:n, :n]
        return np.linalg.solve(A, Phi[:n, n])


def max_dt(problem: SpinProblem, tier: str) -> float:
    """Largest admissible fixed step for ``tier``."""
    T = problem.drive.period
    if tier == "full":
        return 0.1 / problem.rates.delta_dec
    if tier == "reduced":
        return 0.01 * min(T, 1.0 / problem.reduced.effective_rate)
    raise ValueError(f"unknown tier {tier!r}")


def generator_reduced(state: VelocityEnsembleState, t: float, problem: SpinProblem) -> np.ndarray:
    """Per-node derivative in the reduced tier.

    All nodes share the velocity-averaged ground matrix; its derivative is
    copied into every node's ground block. Excited and coherence blocks are
    slaved, so their derivative is zero.
    """
    red = problem.reduced
    sigma = state.mean_rho()[GROUND, GROUND]
    x = red.vec(sigma)
    dx = red.default_system.augmented(t)[:-1] @ np.append(x, 1.0)
    out = np.zeros_like(state.rho)
    out[:, GROUND, GROUND] = red.unvec(dx)
    return out


def _hermitize(rho):
    return 0.5 * (rho + rho.conj().swapaxes(-1, -2))


def step(state: VelocityEnsembleState, dt: float, tier: str, problem: SpinProblem, check_dt: bool = True):
    """One explicit RK4 step followed by Hermitian re-symmetrization."""
    if tier not in TIERS:
        raise ValueError(f"unknown tier {tier!r}")
    if check_dt and dt > max_dt(problem, tier) * (1 + 1e-12):
        raise ValueError(f"dt={dt:.3g} s exceeds the {tier} tier bound {max_dt(problem, tier):.3g} s")
    t = state.t
    if tier == "full":
        f = problem.full_kernel
    else:
        def f(rho, tt):
            return generator_reduced(VelocityEnsembleState(state.v, state.weights, rho, tt), tt, problem)

    rho = state.rho
    k1 = f(rho, t)
    k2 = f(rho + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(rho + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(rho + dt * k3, t + dt)
    new = _hermitize(rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
    drift = np.abs(np.trace(new, axis1=-2, axis2=-1) - np.trace(rho, axis1=-2, axis2=-1)).max()
    if drift > 1e-6:
        raise StiffnessError(f"trace drift {drift:.3g} in one step of {dt:.3g} s; step too large for the generator")
    return VelocityEnsembleState(state.v, state.weights, new, t + dt)


def _run_full(problem: SpinProblem, state: VelocityEnsembleState, h: float, n: int) -> VelocityEnsembleState:
    rho, t, bad = problem.full_runner.run(state.rho, state.t, h, n)
    if bad >= 0:
        raise StiffnessError(f"trace drift above 1e-06 at step {bad} of {h:.3g} s; step too large for the generator")
    return VelocityEnsembleState(state.v, state.weights, rho, t)


def evolve(problem: SpinProblem, duration: float, tier: str, dt: float | None = None, state=None):
    """Integrate from ``state`` (default: equilibrium at every node) for ``duration`` seconds.

    The full tier runs the compiled loop of :mod:`spinpeaks.fullrun`, which
    performs the same RK4 steps as :func:`step`.
    """
    state = state or initial_state(problem)
    dt = dt or max_dt(problem, tier)
    n = max(1, math.ceil(duration / dt - 1e-9))
    h = duration / n
    if tier == "full":
        if h > max_dt(problem, tier) * (1 + 1e-12):
            raise ValueError(f"dt={h:.3g} s exceeds the full tier bound {max_dt(problem, tier):.3g} s")
        return _run_full(problem, state, h, n)
    for _ in range(n):
        state = step(state, h, tier, problem)
    return state


def default_steps(problem: SpinProblem, samples: int, tier: str) -> int:
    """Steps per period: a multiple of ``samples`` respecting the tier bound and
    keeping the Larmor phase per step below 0.05 rad."""
    T = problem.drive.period
    static, harm = harmonic_decomposition(problem.drive)
    bmax = np.linalg.norm(static) + sum(np.linalg.norm(v) for _, v in harm)
    larmor = problem.sys.gyromagnetic_ratio(2) * bmax
    need = max(T / max_dt(problem, tier), T * larmor / 0.05, 4 * samples)
    return samples * math.ceil(need / samples)


def _record_meta(problem: SpinProblem, tier: str, steps: int) -> dict:
    d = problem.drive
    return {
        "Omega": d.Omega,
        "Omega_hz": d.Omega / TWO_PI,
        "mode": d.mode,
        "B0": d.B0,
        "B_dc": d.B_dc,
        "B_ac": d.B_ac,
        "Gamma": problem.rates.Gamma,
        "E_amp": problem.pump.E_amp,
        "tier": tier,
        "n_velocity": problem.n_velocity,
        "steps_per_period": steps,
        "period": d.period,
    }


def _converged(traj, prev, tol) -> bool:
    # the absolute floor lets an unpolarized (rounding-level) trajectory converge
    diff = np.abs(traj - prev).max()
    return diff <= tol * np.abs(traj).max() + 1e-14


def evolve_to_steady(
    problem: SpinProblem,
    tier: str = "reduced",
    samples: int = 256,
    steps_per_period: int | None = None,
    tol: float = STEADY_TOL,
    max_periods: int | None = None,
) -> StroboscopicRecord:
    """Run whole drive periods from equilibrium until the sampled spin
    trajectory repeats, then return the last period."""
    if samples < 2:
        raise ValueError("need at least two samples per period")
    T = problem.drive.period
    if max_periods is None:
        max_periods = math.ceil(20.0 / (problem.rates.Gamma * T)) if problem.rates.Gamma > 0 else 1000
    steps = steps_per_period or default_steps(problem, samples, tier)
    if steps % samples:
        raise ValueError("steps_per_period must be a multiple of samples")
    every = steps // samples
    t0 = problem.drive.phase_origin
    ts = t0 + np.arange(samples) * (T / samples)
    if tier == "reduced":
        traj, periods, converged = _steady_reduced(problem, steps, every, tol, max_periods)
    elif tier == "full":
        traj, periods, converged = _steady_full(problem, steps, every, tol, max_periods)
    else:
        raise ValueError(f"unknown tier {tier!r}")
    B = field_at(ts, problem.drive)
    return StroboscopicRecord(
        t=ts,
        S1=traj[:, :3],
        S2=traj[:, 3:],
        B=B,
        converged=converged,
        periods=periods,
        meta=_record_meta(problem, tier, steps),
    )


def _steady_reduced(problem, steps, every, tol, max_periods):
    red = problem.reduced
    system = red.system()
    Phi, obs = system.period_map(problem.drive.phase_origin, steps, every, red.observables())
    x = np.append(red.vec(problem.rho0[GROUND, GROUND]), 1.0)
    prev = None
    for period in range(1, max_periods + 1):
        traj = np.real(obs @ x)
        if prev is not None and _converged(traj, prev, tol):
            return traj, period, True
        prev = traj
        x = Phi @ x
    return np.real(obs @ x), max_periods, False


def _steady_full(problem, steps, every, tol, max_periods):
    from .observables import spin_polarization

    sys = problem.sys
    state = initial_state(problem)
    h = problem.drive.period / steps
    prev = None
    for period in range(1, max_periods + 1):
        traj = []
        for i in range(0, steps, every):
            traj.append(np.concatenate([spin_polarization(state, 1, sys), spin_polarization(state, 2, sys)]))
            state = _run_full(problem, state, h, every)
        traj = np.array(traj)
        if prev is not None and _converged(traj, prev, tol):
            return traj, period, True
        prev = traj
    return prev, max_periods, False
