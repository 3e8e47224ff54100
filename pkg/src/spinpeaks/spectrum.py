"""Frequency sweeps of the steady spin polarization, peak analysis, the EPR
reference line and HWHM-versus-relaxation studies."""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fields import DriveConfig
from .liouville import STEADY_TOL, SpinProblem, evolve_to_steady
from .observables import convolution_c1, convolution_c2

__all__ = [
    "HwhmTable",
    "PeakReport",
    "SweepError",
    "SweepSpectrum",
    "calibrate_gamma_eff",
    "epr_problem",
    "epr_reference",
    "epr_spectrum",
    "find_peaks",
    "hwhm_vs_gamma",
    "peak_near",
    "refine_peak",
    "sweep",
]

TWO_PI = 2 * np.pi


class SweepError(RuntimeError):
    pass


@dataclass
class SweepSpectrum:
    """C1 and C2 on an increasing grid of drive frequencies (rad/s)."""

    Omega: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    converged: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.Omega = np.asarray(self.Omega, dtype=float)
        if len(self.Omega) > 1 and np.any(np.diff(self.Omega) <= 0):
            raise ValueError("Omega must be strictly increasing")

    def __len__(self) -> int:
        return len(self.Omega)

    @property
    def points(self) -> list[tuple[float, float, float, bool]]:
        return list(zip(self.Omega.tolist(), self.C1.tolist(), self.C2.tolist(), self.converged.tolist()))

    def values(self, which: str) -> np.ndarray:
        if which not in ("C1", "C2"):
            raise ValueError(f"which must be C1 or C2, got {which!r}")
        return getattr(self, which)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(f"# params: {json.dumps(self.params, sort_keys=True)}\n")
            w = csv.writer(fh)
            w.writerow(["Omega_hz", "C1", "C2", "converged"])
            for om, c1, c2, ok in self.points:
                w.writerow([repr(float(om / TWO_PI)), repr(float(c1)), repr(float(c2)), int(ok)])
        return path


def problem_params(problem: SpinProblem, tier: str) -> dict:
    d, r, p = problem.drive, problem.rates, problem.pump
    return {
        "drive": {"mode": d.mode, "B0": d.B0, "B_dc": d.B_dc, "B_ac": d.B_ac, "phase_origin": d.phase_origin},
        "pump": {"E_amp": p.E_amp, "detuning": p.detuning},
        "rates": asdict(r),
        "temperature_k": problem.temperature_k,
        "n_velocity": problem.n_velocity,
        "tier": tier,
    }


def _point(args) -> tuple[float, float, bool]:
    problem, Omega, tier, samples, steps = args
    rec = evolve_to_steady(problem.with_omega(Omega), tier=tier, samples=samples, steps_per_period=steps)
    return convolution_c1(rec), convolution_c2(rec), rec.converged


def _map(fn, items, jobs: int | None):
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def sweep(omega_range=None, n_points: int = 400, problem: SpinProblem | None = None, tier: str = "reduced",
          jobs: int | None = 1, samples: int = 256, steps_per_period: int | None = None,
          omegas=None) -> SweepSpectrum:
    """Steady-state C1, C2 at each drive frequency.

    Either ``omega_range`` (rad/s, inclusive, ``n_points`` uniform) or an
    explicit increasing ``omegas`` array. Points are independent, so the
    result does not depend on ``jobs``.
    """
    problem = problem or SpinProblem()
    if omegas is None:
        lo, hi = omega_range
        if not 0 < lo < hi:
            raise ValueError("sweep range must be positive and increasing")
        if n_points < 3:
            raise ValueError("a sweep needs at least 3 points")
        omegas = np.linspace(lo, hi, n_points)
    omegas = np.asarray(omegas, dtype=float)
    res = _map(_point, [(problem, om, tier, samples, steps_per_period) for om in omegas], jobs)
    C1, C2, ok = (np.array(x) for x in zip(*res))
    if not ok.any():
        raise SweepError("no sweep point reached a periodic steady state")
    params = problem_params(problem, tier) | {"samples": samples, "steps_per_period": steps_per_period}
    return SweepSpectrum(omegas, C1, C2, ok.astype(bool), params)


@dataclass
class PeakReport:
    center: float
    height: float
    hwhm: float
    neighbors: tuple[int, int]
    partial: bool = False
    converged: bool = True

    def to_json(self) -> dict:
        d = asdict(self)
        d["center_hz"] = self.center / TWO_PI
        d["hwhm_hz"] = self.hwhm / TWO_PI
        return d


def _crossing(x, y, i, half, direction) -> float | None:
    j = i
    while 0 <= j + direction < len(y):
        k = j + direction
        if y[k] < half:
            return x[j] + (half - y[j]) * (x[k] - x[j]) / (y[k] - y[j])
        j = k
    return None


def find_peaks(spec, which: str = "C2") -> list[PeakReport]:
    """Local maxima by 3-point comparison with parabolic refinement and
    half-height widths. ``spec`` is a SweepSpectrum or an (x, y) pair."""
    if isinstance(spec, SweepSpectrum):
        x, y, ok = spec.Omega, spec.values(which), spec.converged
    else:
        x, y = (np.asarray(a, dtype=float) for a in spec)
        ok = np.ones(len(x), bool)
    if len(x) < 3:
        raise ValueError("need at least 3 points")
    out = []
    for i in range(1, len(x) - 1):
        if not (y[i] > y[i - 1] and y[i] >= y[i + 1]):
            continue
        a, b, c = np.polyfit(x[i - 1:i + 2] - x[i], y[i - 1:i + 2], 2)
        if a < 0:
            dx = float(np.clip(-b / (2 * a), x[i - 1] - x[i], x[i + 1] - x[i]))
            center, height = x[i] + dx, a * dx * dx + b * dx + c
        else:
            center, height = x[i], y[i]
        half = 0.5 * height
        left = _crossing(x, y, i, half, -1)
        right = _crossing(x, y, i, half, +1)
        sides = [center - left] if left is not None else []
        sides += [right - center] if right is not None else []
        partial = len(sides) < 2
        hwhm = float(np.mean(sides)) if sides else float(max(center - x[0], x[-1] - center))
        lo = np.searchsorted(x, left, "left") - 1 if left is not None else 0
        hi = np.searchsorted(x, right, "left") if right is not None else len(x) - 1
        out.append(PeakReport(float(center), float(height), hwhm, (i - 1, i + 1), partial,
                              bool(ok[max(lo, 0):hi + 1].all())))
    return out


def peak_near(peaks: list[PeakReport], target: float) -> PeakReport:
    if not peaks:
        raise SweepError("no peak found")
    return min(peaks, key=lambda p: abs(p.center - target))


def refine_peak(spec: SweepSpectrum, peak: PeakReport, problem: SpinProblem | None = None,
                factor: int = 10, tier: str = "reduced", jobs: int | None = 1, which: str = "C2") -> PeakReport:
    """Re-sweep a peak window at ``factor`` times the original density."""
    step = float(np.median(np.diff(spec.Omega)))
    half = max(2.5 * peak.hwhm, 2 * step)
    n = int(round(2 * half / step * factor)) + 1
    sub = sweep((peak.center - half, peak.center + half), n, problem, tier, jobs)
    return peak_near(find_peaks(sub, which), peak.center)


def epr_problem(problem: SpinProblem, center: float, B_ac: float = 10e-9, gamma_eff: float | None = None):
    """Same pumping and relaxation, static B_dc chosen so the Larmor frequency equals ``center``."""
    gamma_eff = gamma_eff or problem.sys.gyromagnetic_ratio(2)
    drive = DriveConfig(B0=problem.drive.B0, Omega=center, mode="epr", B_dc=center / gamma_eff, B_ac=B_ac)
    return problem.replace(drive=drive)


def epr_spectrum(problem: SpinProblem, center: float, span: float, n_points: int = 81, B_ac: float = 10e-9,
                 gamma_eff: float | None = None, tier: str = "reduced", jobs: int | None = 1) -> SweepSpectrum:
    """EPR signal C2(B_ac = 0) - C2(Omega) across [center - span, center + span].

    The transverse drive depolarizes the pumped F=2 spin on resonance, so the
    resonance shows up as a dip in C2; the returned C2 column is that dip.
    """
    p = epr_problem(problem, center, B_ac, gamma_eff)
    sp = sweep((center - span, center + span), n_points, p, tier, jobs)
    base = evolve_to_steady(epr_problem(problem, center, 0.0, gamma_eff), tier=tier)
    c2_0 = convolution_c2(base)
    signal = np.clip(c2_0 - sp.C2, 0.0, None)
    # differences at the steady-state tolerance are discretization noise, not signal
    signal[signal < 10 * STEADY_TOL * c2_0] = 0.0
    sp.params |= {"B_ac": B_ac, "B_dc": p.drive.B_dc, "baseline_C2": c2_0}
    return SweepSpectrum(sp.Omega, sp.C1, signal, sp.converged, sp.params)


def epr_reference(problem: SpinProblem, center: float, span: float | None = None, n_points: int = 81,
                  B_ac: float = 10e-9, gamma_eff: float | None = None, tier: str = "reduced",
                  jobs: int | None = 1) -> PeakReport:
    span = span or 4 * problem.rates.Gamma
    sp = epr_spectrum(problem, center, span, n_points, B_ac, gamma_eff, tier, jobs)
    peaks = [p for p in find_peaks(sp) if p.height > 0]
    if not peaks:
        raise SweepError("no EPR resonance inside the swept range")
    best = max(peaks, key=lambda p: p.height)
    if best.neighbors[0] == 0 or best.neighbors[1] == len(sp) - 1:
        raise SweepError("EPR resonance at the edge of the swept range")
    return best


@dataclass
class HwhmTable:
    mode: str
    gamma: np.ndarray  # rad/s
    hwhm: np.ndarray  # rad/s
    center: np.ndarray
    flagged: np.ndarray
    slope: float
    residual: float

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(f"# slope: {self.slope!r}\n# residual: {self.residual!r}\n")
            w = csv.writer(fh)
            w.writerow(["gamma_hz", "hwhm_hz", "mode", "center_hz", "flagged"])
            for g, h, c, f in zip(self.gamma, self.hwhm, self.center, self.flagged):
                w.writerow([repr(float(g / TWO_PI)), repr(float(h / TWO_PI)), self.mode, repr(float(c / TWO_PI)), int(f)])
        return path


def fit_through_origin(x, y) -> tuple[float, float]:
    """Least-squares slope of y = k x and the RMS residual relative to y."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    k = float(x @ y / (x @ x))
    return k, float(np.sqrt(np.mean(((y - k * x) / y) ** 2)))


def hwhm_vs_gamma(gammas, mode: str = "spin_effect", problem: SpinProblem | None = None,
                  center: float | None = None, ratio: float = 0.175337, n_points: int = 81,
                  span_factor: float | None = None, tier: str = "reduced", jobs: int | None = 1,
                  B_ac: float = 10e-9) -> HwhmTable:
    """HWHM of the spin-effect peak or of the EPR line for each relaxation rate Gamma (rad/s).

    The window is centered on ``center`` (default: ratio * gamma * B0) with a
    half-width of ``span_factor`` * Gamma.
    """
    if mode not in ("spin_effect", "epr"):
        raise ValueError(f"mode must be spin_effect or epr, got {mode!r}")
    if len(gammas) < 2:
        raise ValueError("a through-origin fit needs at least two relaxation rates")
    problem = problem or SpinProblem()
    center = center or ratio * problem.sys.gyromagnetic_ratio(2) * problem.drive.B0
    span_factor = span_factor or (1.5 if mode == "spin_effect" else 4.0)
    rows = []
    for g in gammas:
        if g <= 0:
            raise ValueError("relaxation rates must be positive")
        p = problem.with_gamma(g)
        span = span_factor * g
        if mode == "spin_effect":
            sp = sweep((center - span, center + span), n_points, p, tier, jobs)
        else:
            sp = epr_spectrum(p, center, span, n_points, B_ac=B_ac, tier=tier, jobs=jobs)
        peaks = find_peaks(sp)
        if not peaks:
            raise SweepError(f"no {mode} resonance within the window at Gamma = {g / TWO_PI:g} Hz")
        pk = max(peaks, key=lambda q: q.height)
        rows.append((g, pk.hwhm, pk.center, pk.partial or not pk.converged))
    G, H, C, F = (np.array(x) for x in zip(*rows))
    slope, resid = fit_through_origin(G, H)
    return HwhmTable(mode, G, H, C, F.astype(bool), slope, resid)


def calibrate_gamma_eff(peak_center: float, B0: float, ratio: float | None = None, members=None,
                        gamma_guess: float | None = None) -> float:
    """gamma_eff = peak_center / (ratio * B0).

    Without ``ratio``, the member of ``members`` closest to
    peak_center / (gamma_guess * B0) is used; it must lie within 10%.
    """
    if B0 <= 0 or peak_center <= 0:
        raise ValueError("peak center and B0 must be positive")
    if ratio is None:
        if not members or gamma_guess is None:
            raise ValueError("need either ratio or members and gamma_guess")
        est = peak_center / (gamma_guess * B0)
        ratio = min(members, key=lambda r: abs(r - est))
        if abs(ratio - est) > 0.1 * ratio:
            raise ValueError(f"no set-A member within 10% of r = {est:.4f}")
    return peak_center / (ratio * B0)
