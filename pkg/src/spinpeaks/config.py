"""Run configuration: a YAML file whose keys carry their units."""
from __future__ import annotations

from fractions import Fraction
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .atom import AtomSpec, build_atom_system
from .fields import DriveConfig, PumpConfig
from .liouville import RelaxationRates, SpinProblem

__all__ = ["ConfigError", "RunConfig", "default_yaml", "load_config"]

TWO_PI = 2 * np.pi


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AtomSection(_Section):
    nuclear_spin: str = "3/2"
    ground_hfs_hz: float = Field(6.834682610904290e9, gt=0)
    excited_hfs_hz: float = Field(816.656e6, gt=0)
    d1_frequency_hz: float = Field(377.107463380e12, gt=0)
    reduced_dipole_cm: float = Field(2.5377e-29, gt=0)
    g_J: float = Field(2.00233113, gt=0)
    mass_u: float = Field(86.909180527, gt=0)

    @field_validator("nuclear_spin")
    @classmethod
    def _fraction(cls, v):
        Fraction(v)
        return v

    def to_spec(self) -> AtomSpec:
        d = self.model_dump()
        d["nuclear_spin"] = Fraction(d["nuclear_spin"])
        return AtomSpec(**d)


class FieldSection(_Section):
    mode: Literal["dual_harmonic", "epr"] = "dual_harmonic"
    B0_tesla: float = Field(27e-6, gt=0)
    Omega_hz: float = Field(33.2e3, gt=0)
    Bdc_tesla: float = Field(0.0, ge=0)
    Bac_tesla: float = Field(10e-9, ge=0)
    phase_origin_s: float = 0.0


class PumpSection(_Section):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    E_amp_vpm: float = Field(100.0, ge=0, alias="E_amp")
    detuning_hz: float = 0.0


class RatesSection(_Section):
    Gamma_hz: float = Field(1e3, gt=0)
    delta_mix_hz: float = Field(1e9, gt=0)
    delta_dcy_hz: float = Field(1e8, gt=0)
    delta_dec_hz: float = Field(1e10, gt=0)


class CellSection(_Section):
    temperature_c: float = Field(80.0, gt=-273.15)
    n_velocity: int = Field(8, ge=1)


class SweepSection(_Section):
    omega_lo_hz: float = Field(10e3, gt=0)
    omega_hi_hz: float = Field(50e3, gt=0)
    points: int = Field(400, ge=3)
    samples: int = Field(256, ge=2)
    refine_factor: int = Field(10, ge=1)


class PauliSection(_Section):
    r_lo: float = Field(0.05, gt=0)
    r_hi: float = Field(0.35, gt=0)
    n_scan: int = Field(1200, ge=3)
    phase0_rad: float = 0.0


class HwhmSection(_Section):
    gammas_hz: list[float] = [500.0, 1000.0, 2000.0]
    points: int = Field(81, ge=5)
    center_hz: float | None = Field(None, gt=0)


class RunConfig(_Section):
    atom: AtomSection = AtomSection()
    field: FieldSection = FieldSection()
    pump: PumpSection = PumpSection()
    rates: RatesSection = RatesSection()
    cell: CellSection = CellSection()
    tier: Literal["reduced", "full"] = "reduced"
    sweep: SweepSection = SweepSection()
    pauli: PauliSection = PauliSection()
    hwhm: HwhmSection = HwhmSection()
    output_dir: str = "out"
    deterministic: Literal[True] = True

    def snapshot(self) -> dict:
        return self.model_dump(mode="json")

    def drive(self, mode: str | None = None) -> DriveConfig:
        f = self.field
        return DriveConfig(
            B0=f.B0_tesla,
            Omega=TWO_PI * f.Omega_hz,
            mode=mode or f.mode,
            B_dc=f.Bdc_tesla,
            B_ac=f.Bac_tesla,
            phase_origin=f.phase_origin_s,
        )

    def problem(self) -> SpinProblem:
        r = self.rates
        return SpinProblem(
            drive=self.drive(),
            pump=PumpConfig(E_amp=self.pump.E_amp_vpm, detuning=TWO_PI * self.pump.detuning_hz),
            rates=RelaxationRates.from_hz(r.Gamma_hz, r.delta_mix_hz, r.delta_dcy_hz, r.delta_dec_hz),
            sys=build_atom_system(self.atom.to_spec()),
            temperature_k=self.cell.temperature_c + 273.15,
            n_velocity=self.cell.n_velocity,
        )


def _diagnostics(err: ValidationError) -> str:
    return "\n".join(f"  {'.'.join(map(str, e['loc']))}: {e['msg']}" for e in err.errors())


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read a YAML config (defaults when ``path`` is None) and validate it.

    ``overrides`` maps dotted keys such as ``"sweep.points"`` to values;
    None values are ignored.
    """
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping at top level")
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    try:
        cfg = RunConfig.model_validate(data)
        cfg.drive()
        cfg.atom.to_spec()
    except ValidationError as e:
        raise ConfigError("invalid config:\n" + _diagnostics(e)) from e
    except ValueError as e:
        raise ConfigError(f"invalid config: {e}") from e
    if cfg.sweep.omega_lo_hz >= cfg.sweep.omega_hi_hz:
        raise ConfigError("invalid config:\n  sweep: omega_lo_hz must be below omega_hi_hz")
    if cfg.pauli.r_lo >= cfg.pauli.r_hi:
        raise ConfigError("invalid config:\n  pauli: r_lo must be below r_hi")
    return cfg


def default_yaml() -> str:
    return yaml.safe_dump(RunConfig().snapshot(), sort_keys=False)
