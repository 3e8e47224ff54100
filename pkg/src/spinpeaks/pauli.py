"""Free spin-1/2 under the dual-harmonic drive: one-period propagators and the
discrete set of drive frequencies whose solutions are periodic for every
initial spinor.

The spin obeys  i d(phi)/dt = gamma (sigma . B(t)) phi  with sigma = Pauli/2.
Everything depends on gamma*B0 and Omega only through r = Omega/(gamma*B0):
in the phase variable theta = Omega*(t - t_origin) the equation reads
i d(phi)/d(theta) = (1/r) (sigma . b(theta)) phi with b = B/B0.
All scans below integrate in theta, so one array of r values is propagated
in a single vectorized RK4 sweep.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "MonodromyResult",
    "SetAReport",
    "averaged_spin",
    "best_phase",
    "deviation",
    "deviation_curve",
    "dual_harmonic",
    "monodromy",
    "propagate",
    "refine_member",
    "scan_set_A",
    "structural_zero_audit",
]

SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
SIGMA = np.stack([SX, SY, SZ])

INITIAL = {
    "x": np.array([1, 1], dtype=complex) / math.sqrt(2),
    "y": np.array([1, 1j], dtype=complex) / math.sqrt(2),
    "z": np.array([1, 0], dtype=complex),
}
# positions that vanish because the drive lies in the XZ plane
STRUCTURAL_ZEROS = {"x": (1,), "y": (0, 2), "z": (1,)}

TOL_A = 1e-6
PROJECT_EVERY = 256


def dual_harmonic(theta):
    """b(theta) = l_z cos(theta) + l_x cos(2 theta), in units of B0."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(2 * theta), np.zeros_like(theta), np.cos(theta)], axis=-1)


Field = Callable[[np.ndarray], np.ndarray]


def _ham(b: np.ndarray) -> np.ndarray:
    return np.einsum("...a,aij->...ij", b, SIGMA)


def _polar(U: np.ndarray) -> np.ndarray:
    W, _, Vh = np.linalg.svd(U)
    return W @ Vh


def _unitarity_error(U: np.ndarray) -> float:
    eye = np.eye(U.shape[-1])
    return float(np.abs(np.swapaxes(U.conj(), -1, -2) @ U - eye).max())


def n_steps(r_min: float, min_steps: int = 4096) -> int:
    """Steps per period: dt <= T/4096 and gamma*B0*dt <= 0.01, rounded up to a multiple of 256."""
    need = max(min_steps, 2 * math.pi / (0.01 * r_min))
    return PROJECT_EVERY * math.ceil(need / PROJECT_EVERY)


def _rk4_coefficients(theta: np.ndarray, h: float, field: Field) -> np.ndarray:
    """r-independent coefficients of the RK4 step matrix.

    For U' = A U with A = -i H(theta)/r, one RK4 step is the polynomial
    M = 1 + s C1 + s^2 C2 + s^3 C3 + s^4 C4 in s = h/r. Returns shape (4, m, 2, 2).
    """
    A1 = -1j * _ham(field(theta))
    A2 = -1j * _ham(field(theta + 0.5 * h))
    A3 = -1j * _ham(field(theta + h))
    A21 = A2 @ A1
    A22 = A2 @ A2
    return np.stack([
        (A1 + 4 * A2 + A3) / 6,
        (A21 + A22 + A3 @ A2) / 6,
        (A2 @ A21 + A3 @ A22) / 12,
        (A3 @ A2 @ A21) / 24,
    ])


def _step_matrices(coef: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Step matrices of shape (m, N, 2, 2) for step sizes s = h/r of shape (N,)."""
    s = s[None, :, None, None]
    M = coef[3][:, None] * s
    for k in (2, 1, 0):
        M = (M + coef[k][:, None]) * s
    M += np.eye(2)
    return M


def _chain(M: np.ndarray) -> np.ndarray:
    """Ordered product M[m-1] ... M[1] M[0] by pairwise reduction."""
    while len(M) > 1:
        if len(M) % 2:
            M = np.concatenate([M[:-2], (M[-1] @ M[-2])[None]])
            continue
        M = M[1::2] @ M[0::2]
    return M[0]


def propagate(r, theta0: float = 0.0, span: float = 2 * math.pi, steps: int | None = None,
              field: Field = dual_harmonic, samples: int = 0, psi0: np.ndarray | None = None):
    """RK4 propagator of i dU/dtheta = (sigma . b(theta)) U / r over [theta0, theta0 + span].

    ``r`` may be an array; the result then has shape r.shape + (2, 2). With
    ``psi0`` and ``samples > 0`` the spinor is also recorded at ``samples``
    equally spaced phases (closing point excluded) and returned second.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    steps = steps or n_steps(float(r.min()))
    if samples and steps % samples:
        raise ValueError("steps must be a multiple of samples")
    h = span / steps
    s = h / r
    every = steps // samples if samples else 0
    U = np.broadcast_to(np.eye(2, dtype=complex), r.shape + (2, 2)).copy()
    rec = []
    for start in range(0, steps, PROJECT_EVERY):
        m = min(PROJECT_EVERY, steps - start)
        theta = theta0 + h * np.arange(start, start + m)
        M = _step_matrices(_rk4_coefficients(theta, h, field), s)
        if every:
            for i in range(m):
                if (start + i) % every == 0:
                    rec.append(U @ psi0)
                U = M[i] @ U
        else:
            U = _chain(M) @ U
        err = _unitarity_error(U)
        if err > 1e-8:
            raise FloatingPointError(f"unitarity drift {err:.2e} before projection; step too large")
        U = _polar(U)
    if samples:
        return U, np.array(rec)
    return U


def deviation(U: np.ndarray) -> np.ndarray:
    """d = 2 - |Tr U|, zero iff U = +1 or -1 for U in SU(2)."""
    return 2.0 - np.abs(np.trace(U, axis1=-2, axis2=-1))


def _classify(U, tol=TOL_A) -> str:
    tr = np.trace(U)
    if 2.0 - abs(tr) < tol:
        return "plus_identity" if tr.real > 0 else "minus_identity"
    return "none"


@dataclass
class MonodromyResult:
    Omega: float
    U: np.ndarray
    deviation: float
    classification: str


def monodromy(Omega: float, B0: float, gamma: float, t0: float = 0.0,
              field: Field = dual_harmonic, steps: int | None = None) -> MonodromyResult:
    """One-period propagator of the Pauli equation starting at time ``t0``."""
    if Omega <= 0:
        raise ValueError("Omega must be positive")
    if B0 == 0:
        U = np.eye(2, dtype=complex)
    else:
        r = Omega / (gamma * B0)
        U = propagate(r, theta0=Omega * t0, field=field, steps=steps)[0]
    return MonodromyResult(Omega, U, float(deviation(U)), _classify(U))


def _golden(f, lo, hi, xtol):
    """Golden-section minimization run on many independent brackets at once."""
    g = (math.sqrt(5) - 1) / 2
    a, b = np.array(lo, float), np.array(hi, float)
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    while np.max(b - a) > xtol:
        left = fc < fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        c_new = np.where(left, b - g * (b - a), d)
        d_new = np.where(left, c, a + g * (b - a))
        fp = f(np.where(left, c_new, d_new))
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        c, d = c_new, d_new
    return 0.5 * (a + b)


@dataclass
class SetAReport:
    frequencies: list[float]  # r members, descending
    classification: list[str]
    deviations: list[float]
    averaged: list[dict[str, list[float]]] = field(default_factory=list)
    t0: float = 0.0
    grid: np.ndarray | None = None
    curve: np.ndarray | None = None
    Omega: list[float] | None = None

    def to_json(self) -> list[dict]:
        return [
            {"r": r, "classification": c, "deviation": d, "averaged": avg, "t0": self.t0}
            for r, c, d, avg in zip(self.frequencies, self.classification, self.deviations,
                                    self.averaged or [{}] * len(self.frequencies))
        ]

    def write_json(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    def write_curve(self, path: str | Path, header: str = ""):
        if self.grid is None:
            raise ValueError("report carries no deviation curve")
        with Path(path).open("w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            w.writerow(["r", "d"])
            for r, d in zip(self.grid, self.curve):
                w.writerow([repr(float(r)), repr(float(d))])


def deviation_curve(r, phase0: float = 0.0, field: Field = dual_harmonic, steps: int | None = None,
                    band: int = 200):
    """d(r) for an array of ratios, integrated in bands sharing one step count."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if steps is not None:
        return deviation(propagate(r, theta0=phase0, field=field, steps=steps))
    order = np.argsort(r)
    out = np.empty_like(r)
    for k in range(0, len(r), band):
        idx = order[k:k + band]
        out[idx] = deviation(propagate(r[idx], theta0=phase0, field=field))
    return out


def refine_member(r0: float, window: float = 2e-3, phase0: float = 0.0,
                  field: Field = dual_harmonic, xtol: float = 1e-7) -> float:
    """Minimize d(r) on [r0 - window, r0 + window]."""
    steps = n_steps(r0 - window)
    f = lambda r: deviation_curve(r, phase0, field, steps)
    return float(_golden(f, [r0 - window], [r0 + window], xtol)[0])


def scan_set_A(ratio_range=(0.05, 0.35), n_scan: int = 1200, B0: float | None = None,
               gamma: float | None = None, phase0: float = 0.0, field: Field = dual_harmonic,
               tol: float = TOL_A, xtol: float = 1e-7, averages: bool = True) -> SetAReport:
    """Locate the members of set A in ``ratio_range``.

    ``phase0`` is the drive phase Omega*t0 at which evolution starts. B0 and
    gamma only label the report with physical frequencies; the roots are
    functions of r alone.
    """
    lo, hi = map(float, ratio_range)
    if not 0 < lo < hi:
        raise ValueError("ratio_range must satisfy 0 < r_lo < r_hi")
    grid = np.linspace(lo, hi, n_scan)
    steps = n_steps(lo)
    curve = deviation_curve(grid, phase0, field)
    i = np.arange(1, n_scan - 1)
    is_min = (curve[i] <= curve[i - 1]) & (curve[i] <= curve[i + 1]) & (curve[i] < 0.5)
    idx = i[is_min]
    members, devs = [], []
    if len(idx):
        f = lambda r: deviation_curve(r, phase0, field, steps)
        roots = _golden(f, grid[idx - 1], grid[idx + 1], xtol)
        d_roots = f(roots)
        keep = d_roots < tol
        members, devs = roots[keep], d_roots[keep]
    order = np.argsort(members)[::-1]
    members = [float(members[k]) for k in order]
    devs = [float(devs[k]) for k in order]
    classes = [_classify(propagate(r, theta0=phase0, field=field, steps=steps)[0], tol) for r in members]
    report = SetAReport(members, classes, devs, t0=phase0, grid=grid, curve=curve)
    if averages:
        report.averaged = [
            {ax: averaged_spin(r, ax, phase0, field, refine=False).tolist() for ax in INITIAL} for r in members
        ]
    if B0 is not None and gamma is not None:
        report.Omega = [r * gamma * B0 for r in members]
    return report


def averaged_spin(r: float, initial: str, phase0: float = 0.0, field: Field = dual_harmonic,
                  refine: bool = True, tol: float = TOL_A, steps: int | None = None) -> np.ndarray:
    """Period average of <phi|sigma|phi> for a spinor stretched along ``initial``.

    With ``refine`` the nearest member of A within 0.002 of ``r`` is used,
    so rounded tabulated ratios can be passed directly.
    """
    if initial not in INITIAL:
        raise ValueError(f"initial axis must be one of x, y, z, got {initial!r}")
    if refine:
        r = refine_member(r, phase0=phase0, field=field)
    steps = steps or n_steps(r)
    U, psi = propagate(r, theta0=phase0, field=field, steps=steps, samples=steps, psi0=INITIAL[initial])
    d = float(deviation(U)[0])
    if d >= tol:
        raise ValueError(f"r = {r:.6f} is not in set A (deviation {d:.2e})")
    psi = psi[:, 0, :]
    spins = np.einsum("ti,aij,tj->ta", psi.conj(), SIGMA, psi).real
    return spins.mean(axis=0)


def structural_zero_audit(report: SetAReport, tol: float = 1e-6) -> bool:
    """True iff every entry forced to zero by an XZ-plane drive is below ``tol``."""
    if not report.frequencies or not report.averaged:
        raise ValueError("structural zero audit needs a nonempty report with averages")
    for avg in report.averaged:
        for ax, zeros in STRUCTURAL_ZEROS.items():
            if any(abs(avg[ax][k]) >= tol for k in zeros):
                return False
    return True


def best_phase(reference: dict[float, dict[str, list[float]]], n_phase: int = 64,
               field: Field = dual_harmonic) -> tuple[float, float]:
    """Drive phase at spin creation that best reproduces ``reference`` averages.

    ``reference`` maps r to {axis: 3-vector}. Returns (phase, worst absolute error).
    """
    best = (0.0, np.inf)
    for phase in np.linspace(0, 2 * np.pi, n_phase, endpoint=False):
        worst = 0.0
        for r, cells in reference.items():
            rr = refine_member(r, phase0=phase, field=field)
            for ax, ref in cells.items():
                got = averaged_spin(rr, ax, phase, field, refine=False)
                worst = max(worst, float(np.abs(got - np.asarray(ref)).max()))
        if worst < best[1]:
            best = (float(phase), worst)
    return best
