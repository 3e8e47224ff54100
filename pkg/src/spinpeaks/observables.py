"""Spin-polarization observables, the two period convolutions and trajectory I/O."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import directed_hausdorff

from .atom import BLOCKS, AtomSystem

__all__ = [
    "SpinPolarizationSample",
    "StroboscopicRecord",
    "convolution_c1",
    "convolution_c2",
    "export_trajectory",
    "harmonic_content",
    "mirror_symmetry_audit",
    "read_trajectory",
    "spin_polarization",
    "spin_polarization_matrix",
    "summary_json",
]


class SpinPolarizationSample(NamedTuple):
    t: float
    S1: np.ndarray
    S2: np.ndarray


@dataclass
class StroboscopicRecord:
    """One steady drive period sampled on a uniform grid.

    ``S1``, ``S2`` and ``B`` have shape (count, 3); ``t`` has shape (count,).
    """

    t: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    B: np.ndarray
    converged: bool
    periods: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def period(self) -> float:
        return float(self.meta.get("period", (self.t[1] - self.t[0]) * len(self.t)))

    @property
    def samples(self) -> list[SpinPolarizationSample]:
        return [SpinPolarizationSample(float(t), s1, s2) for t, s1, s2 in zip(self.t, self.S1, self.S2)]


def _check_n(n: int) -> slice:
    if n not in (1, 2):
        raise ValueError(f"ground level must be F=1 or F=2, got {n!r}")
    return BLOCKS["ground", n]


def spin_polarization_matrix(rho: np.ndarray, n: int, sys: AtomSystem) -> np.ndarray:
    """S_[n] of a single (already velocity averaged) 16x16 or 8x8 density matrix."""
    blk = _check_n(n)
    rho_n = rho[..., blk, blk]
    return np.stack([np.einsum("...ij,ji->...", rho_n, op).real for op in sys.Fops[n]], axis=-1)


def spin_polarization(state, n: int, sys: AtomSystem) -> np.ndarray:
    """Velocity-averaged spin polarization of ground level F=n.

    ``state`` is a :class:`~spinpeaks.liouville.VelocityEnsembleState`; the
    cropped matrix P_n rho P_n is averaged with the quadrature weights before
    taking Tr(rho_n Sigma_{n,a}).
    """
    return spin_polarization_matrix(state.mean_rho(), n, sys)


def _require(record: StroboscopicRecord):
    if record is None or len(record) == 0:
        raise ValueError("empty stroboscopic record")


def convolution_c1(record: StroboscopicRecord) -> float:
    """Radius of the smallest origin-centred sphere holding the S2 trajectory."""
    _require(record)
    return float(np.linalg.norm(record.S2, axis=1).max())


def convolution_c2(record: StroboscopicRecord) -> float:
    """Magnitude of the period-averaged S2.

    The record covers one period without its closing point, so the periodic
    trapezoid rule reduces to the sample mean.
    """
    _require(record)
    return float(np.linalg.norm(record.S2.mean(axis=0)))


def _mean_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(cKDTree(b).query(a)[0].mean())


def mirror_symmetry_audit(record: StroboscopicRecord) -> dict:
    """Distance between the S2 trajectory and its x- and y-mirror images, relative to C1.

    ``x_flip``/``y_flip`` use the modified Hausdorff distance (larger of the
    two mean nearest-neighbour distances), which measures how far the curves
    are apart along their length. ``*_max`` hold the classic Hausdorff
    distance, dominated by the single worst point.
    """
    _require(record)
    pts = record.S2
    c1 = convolution_c1(record)
    out = {}
    for axis, name in ((0, "x_flip"), (1, "y_flip")):
        mirrored = pts.copy()
        mirrored[:, axis] *= -1
        mhd = max(_mean_distance(pts, mirrored), _mean_distance(mirrored, pts))
        hd = max(directed_hausdorff(pts, mirrored)[0], directed_hausdorff(mirrored, pts)[0])
        out[name] = mhd / c1 if c1 > 0 else 0.0
        out[name + "_max"] = hd / c1 if c1 > 0 else 0.0
    return out


def harmonic_content(record: StroboscopicRecord, component: int = 2) -> dict:
    """Fourier amplitudes of one S2 component over the recorded period.

    ``ratio`` compares the largest amplitude above 2 Omega with the
    fundamental; ``ratio_low`` compares it with the larger of the first two
    harmonics, which stays meaningful when the fundamental vanishes by symmetry.
    """
    _require(record)
    c = np.abs(np.fft.rfft(record.S2[:, component])) / len(record)
    c[1:] *= 2
    fundamental = float(c[1])
    low = float(c[1:3].max())
    higher = float(c[3:].max()) if len(c) > 3 else 0.0
    return {
        "amplitudes": c,
        "fundamental": fundamental,
        "max_above_2": higher,
        "ratio": higher / fundamental if fundamental > 0 else np.inf,
        "ratio_low": higher / low if low > 0 else np.inf,
    }


COLUMNS = ["t", "S1x", "S1y", "S1z", "S2x", "S2y", "S2z", "Bx", "Bz"]


def export_trajectory(record: StroboscopicRecord, path: str | Path) -> Path:
    """Write the record as CSV preceded by ``# key: value`` metadata lines."""
    _require(record)
    path = Path(path)
    meta = {"converged": record.converged, "periods": record.periods, **record.meta}
    with path.open("w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {json.dumps(v)}\n")
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for i in range(len(record)):
            row = [record.t[i], *record.S1[i], *record.S2[i], record.B[i, 0], record.B[i, 2]]
            w.writerow([repr(float(x)) for x in row])
    return path


def read_trajectory(path: str | Path) -> StroboscopicRecord:
    meta = {}
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                k, v = line[1:].split(":", 1)
                meta[k.strip()] = json.loads(v)
            else:
                break
        header = line.strip().split(",")
        if header != COLUMNS:
            raise ValueError(f"unexpected trajectory columns {header}")
        rows = [list(map(float, r)) for r in csv.reader(fh)]
    a = np.array(rows).reshape(-1, len(COLUMNS))
    B = np.column_stack([a[:, 7], np.zeros(len(a)), a[:, 8]])
    converged = bool(meta.pop("converged", True))
    periods = int(meta.pop("periods", 0))
    return StroboscopicRecord(a[:, 0], a[:, 1:4], a[:, 4:7], B, converged, periods, meta)


def summary_json(Omega: float, record: StroboscopicRecord) -> dict:
    return {
        "Omega": Omega,
        "C1": convolution_c1(record),
        "C2": convolution_c2(record),
        "converged": record.converged,
    }
