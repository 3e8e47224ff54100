"""Classical fields: the zero-mean dual-harmonic drive, the EPR reference field
and the slowly varying pump envelope."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "DriveConfig",
    "PumpConfig",
    "drive_field",
    "epr_field",
    "field_at",
    "harmonic_decomposition",
    "pump_positive_frequency",
]

L_X = np.array([1.0, 0.0, 0.0])
L_Z = np.array([0.0, 0.0, 1.0])
SIGMA_PLUS = np.array([-1.0, -1.0j, 0.0]) / np.sqrt(2.0)  # spherical unit e_{+1}

MIN_EPR_RATIO = 10.0


@dataclass(frozen=True)
class DriveConfig:
    """Magnetic drive. Amplitudes in tesla, ``Omega`` in rad/s, ``phase_origin`` in s."""

    B0: float = 27e-6
    Omega: float = 2 * np.pi * 33.2e3
    mode: str = "dual_harmonic"
    B_dc: float = 0.0
    B_ac: float = 0.0
    phase_origin: float = 0.0

    def __post_init__(self):
        if self.Omega <= 0:
            raise ValueError("Omega must be positive")
        if self.mode == "dual_harmonic":
            if self.B0 <= 0:
                raise ValueError("B0 must be positive in dual_harmonic mode")
        elif self.mode == "epr":
            if self.B_dc <= 0:
                raise ValueError("B_dc must be positive in epr mode")
            if self.B_ac < 0:
                raise ValueError("B_ac must be non-negative")
            if self.B_ac > 0 and self.B_dc / self.B_ac < MIN_EPR_RATIO:
                raise ValueError(
                    f"epr mode needs B_dc/B_ac >= {MIN_EPR_RATIO:g}, got {self.B_dc / self.B_ac:.3g}"
                )
        else:
            raise ValueError(f"unknown drive mode {self.mode!r}")

    @property
    def period(self) -> float:
        return 2 * np.pi / self.Omega

    def with_omega(self, Omega: float) -> "DriveConfig":
        return replace(self, Omega=Omega)


@dataclass(frozen=True)
class PumpConfig:
    """Circularly polarized pump. ``E_amp`` in V/m, ``detuning`` in rad/s from F=1 -> F'=2."""

    E_amp: float = 100.0
    detuning: float = 0.0

    def __post_init__(self):
        if self.E_amp < 0:
            raise ValueError("E_amp must be non-negative")

    @property
    def polarization(self) -> np.ndarray:
        return SIGMA_PLUS


def drive_field(t, cfg: DriveConfig) -> np.ndarray:
    """Dual-harmonic field B0 l_z cos(W(t-t0)) + B0 l_x cos(2W(t-t0)).

    Accepts scalar or array ``t``; the last axis of the result holds (Bx, By, Bz).
    """
    if cfg.mode != "dual_harmonic":
        raise ValueError(f"drive_field needs dual_harmonic mode, got {cfg.mode!r}")
    phase = cfg.Omega * (np.asarray(t, dtype=float) - cfg.phase_origin)
    return cfg.B0 * (np.multiply.outer(np.cos(phase), L_Z) + np.multiply.outer(np.cos(2 * phase), L_X))


def epr_field(t, cfg: DriveConfig) -> np.ndarray:
    """Static B_dc along z plus a transverse B_ac cos(W(t-t0)) along x."""
    if cfg.mode != "epr":
        raise ValueError(f"epr_field needs epr mode, got {cfg.mode!r}")
    phase = cfg.Omega * (np.asarray(t, dtype=float) - cfg.phase_origin)
    return cfg.B_dc * L_Z + cfg.B_ac * np.multiply.outer(np.cos(phase), L_X)


def field_at(t, cfg: DriveConfig) -> np.ndarray:
    return drive_field(t, cfg) if cfg.mode == "dual_harmonic" else epr_field(t, cfg)


def harmonic_decomposition(cfg: DriveConfig) -> tuple[np.ndarray, list[tuple[int, np.ndarray]]]:
    """Split the field into a static vector and cosine harmonics of Omega.

    Returns ``(static, [(k, vector_k), ...])`` with
    B(t) = static + sum_k vector_k cos(k Omega (t - t0)).
    """
    if cfg.mode == "dual_harmonic":
        return np.zeros(3), [(1, cfg.B0 * L_Z), (2, cfg.B0 * L_X)]
    return cfg.B_dc * L_Z, [(1, cfg.B_ac * L_X)]


def pump_positive_frequency(cfg: PumpConfig) -> np.ndarray:
    """Envelope (E/2) l+ of the positive-frequency part of the pump field (V/m)."""
    return 0.5 * cfg.E_amp * cfg.polarization
