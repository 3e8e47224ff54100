import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinpeaks.fields import (
    DriveConfig,
    PumpConfig,
    drive_field,
    epr_field,
    field_at,
    harmonic_decomposition,
    pump_positive_frequency,
)

B0 = 27e-6
OMEGA = 2 * np.pi * 33.2e3


def test_drive_at_origin_and_half_period():
    cfg = DriveConfig(B0=B0, Omega=OMEGA, phase_origin=1e-4)
    assert np.allclose(drive_field(1e-4, cfg), [B0, 0, B0], rtol=0, atol=1e-20)
    assert np.allclose(drive_field(1e-4 + np.pi / OMEGA, cfg), [B0, 0, -B0], rtol=0, atol=1e-18)


def test_drive_zero_mean():
    cfg = DriveConfig(B0=B0, Omega=OMEGA)
    t = np.arange(1024) * cfg.period / 1024
    assert np.abs(drive_field(t, cfg).mean(axis=0)).max() < 1e-15 * B0


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e-3, 1e-3), st.floats(1e3, 1e5))
def test_drive_periodic(t, f_hz):
    cfg = DriveConfig(B0=B0, Omega=2 * np.pi * f_hz)
    diff = drive_field(t + cfg.period, cfg) - drive_field(t, cfg)
    # the phase Omega * (t + T) is itself rounded, so the bound scales with it
    phase = max(abs(cfg.Omega * t), abs(cfg.Omega * (t + cfg.period)))
    assert np.linalg.norm(diff) < 1e-15 * B0 * max(1.0, phase)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(0, 1e-4))
def test_drive_scales_with_b0(s, t):
    a = drive_field(t, DriveConfig(B0=B0, Omega=OMEGA))
    b = drive_field(t, DriveConfig(B0=s * B0, Omega=OMEGA))
    assert np.allclose(b, s * a, rtol=1e-14, atol=0)


def test_drive_has_no_y_component():
    cfg = DriveConfig(B0=B0, Omega=OMEGA)
    t = np.linspace(0, 1e-3, 77)
    assert np.all(drive_field(t, cfg)[:, 1] == 0)


def test_epr_field_examples():
    cfg = DriveConfig(Omega=OMEGA, mode="epr", B_dc=10e-6, B_ac=10e-9)
    assert np.allclose(epr_field(0.0, cfg), [10e-9, 0, 10e-6], rtol=1e-14)
    t = np.arange(512) * cfg.period / 512
    assert np.allclose(epr_field(t, cfg).mean(axis=0), [0, 0, 10e-6], rtol=1e-14, atol=1e-20)
    static = DriveConfig(Omega=OMEGA, mode="epr", B_dc=10e-6, B_ac=0.0)
    assert np.all(epr_field(t, static) == [0, 0, 10e-6])


def test_epr_ratio_validation():
    with pytest.raises(ValueError):
        DriveConfig(Omega=OMEGA, mode="epr", B_dc=1e-7, B_ac=1e-8 * 2)


def test_wrong_mode_rejected():
    with pytest.raises(ValueError):
        drive_field(0.0, DriveConfig(Omega=OMEGA, mode="epr", B_dc=1e-5))
    with pytest.raises(ValueError):
        epr_field(0.0, DriveConfig(B0=B0, Omega=OMEGA))
    with pytest.raises(ValueError):
        DriveConfig(B0=B0, Omega=OMEGA, mode="square")
    with pytest.raises(ValueError):
        DriveConfig(B0=B0, Omega=-1.0)


@pytest.mark.parametrize("cfg", [
    DriveConfig(B0=B0, Omega=OMEGA, phase_origin=3e-6),
    DriveConfig(Omega=OMEGA, mode="epr", B_dc=5e-6, B_ac=2e-8),
])
def test_harmonic_decomposition_reconstructs(cfg):
    static, harm = harmonic_decomposition(cfg)
    t = np.linspace(0, 2e-4, 101)
    ph = cfg.Omega * (t - cfg.phase_origin)
    B = static + sum(np.multiply.outer(np.cos(k * ph), v) for k, v in harm)
    assert np.allclose(B, field_at(t, cfg), rtol=0, atol=1e-20)


def test_pump_envelope():
    env = pump_positive_frequency(PumpConfig(E_amp=100.0))
    assert np.linalg.norm(env) == pytest.approx(50.0)
    assert np.all(pump_positive_frequency(PumpConfig(E_amp=0.0)) == 0)
    l = PumpConfig().polarization
    assert np.vdot(l, l).real == pytest.approx(1.0)
    with pytest.raises(ValueError):
        PumpConfig(E_amp=-1.0)
