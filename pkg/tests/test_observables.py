import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spinpeaks.atom import BLOCKS, spin_matrices
from spinpeaks.observables import (
    StroboscopicRecord,
    convolution_c1,
    convolution_c2,
    export_trajectory,
    harmonic_content,
    mirror_symmetry_audit,
    read_trajectory,
    spin_polarization_matrix,
    summary_json,
)


def _record(S2, S1=None, T=1e-4):
    n = len(S2)
    t = np.arange(n) * T / n
    S1 = np.zeros((n, 3)) if S1 is None else S1
    B = np.column_stack([np.cos(2 * np.pi * t / T), np.zeros(n), np.cos(4 * np.pi * t / T)])
    return StroboscopicRecord(t, S1, np.asarray(S2, float), B, True, 3, {"period": T})


def test_stretched_states(sys16):
    rho = np.zeros((16, 16), complex)
    k = sys16.labels.index(("ground", 2, 2))
    rho[k, k] = 1
    assert np.allclose(spin_polarization_matrix(rho, 2, sys16), [0, 0, 2])
    assert np.allclose(spin_polarization_matrix(rho, 1, sys16), 0)
    Fx = spin_matrices(2)[0]
    w, V = np.linalg.eigh(Fx)
    psi = V[:, np.argmax(w)]
    rho = np.zeros((16, 16), complex)
    blk = BLOCKS["ground", 2]
    rho[blk, blk] = np.outer(psi, psi.conj())
    assert np.allclose(spin_polarization_matrix(rho, 2, sys16), [2, 0, 0], atol=1e-12)


def test_constant_record():
    rec = _record(np.tile([0, 0, 0.1], (32, 1)))
    assert convolution_c1(rec) == pytest.approx(0.1)
    assert convolution_c2(rec) == pytest.approx(0.1)


def test_pure_sinusoid_averages_out():
    th = 2 * np.pi * np.arange(64) / 64
    rec = _record(np.column_stack([np.sin(th), 0 * th, 0 * th]))
    assert convolution_c2(rec) < 1e-15
    assert convolution_c1(rec) == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (16, 3), elements=st.floats(-2, 2)))
def test_c1_bounds_c2(S2):
    rec = _record(S2)
    assert convolution_c1(rec) >= convolution_c2(rec) - 1e-15


def test_empty_record_errors(tmp_path):
    empty = StroboscopicRecord(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)), False)
    for fn in (convolution_c1, convolution_c2, mirror_symmetry_audit, harmonic_content):
        with pytest.raises(ValueError):
            fn(empty)
    with pytest.raises(ValueError):
        export_trajectory(empty, tmp_path / "x.csv")


def test_roundtrip(tmp_path, rng):
    S1 = rng.normal(size=(40, 3))
    S2 = rng.normal(size=(40, 3))
    rec = _record(S2, S1)
    rec.meta["Omega"] = 1234.5
    path = export_trajectory(rec, tmp_path / "traj.csv")
    back = read_trajectory(path)
    assert np.array_equal(back.t, rec.t)
    assert np.array_equal(back.S1, rec.S1)
    assert np.array_equal(back.S2, rec.S2)
    assert np.array_equal(back.B, rec.B)
    assert back.converged and back.periods == 3
    assert back.meta["Omega"] == 1234.5
    header = path.read_text().splitlines()
    assert [l for l in header if not l.startswith("#")][0] == "t,S1x,S1y,S1z,S2x,S2y,S2z,Bx,Bz"


def test_mirror_audit_symmetric_curve():
    th = 2 * np.pi * np.arange(200) / 200
    # a figure-eight lying in the xz plane is its own image under both flips
    S2 = np.column_stack([np.sin(2 * th), 0 * th, 0.5 + np.cos(th)])
    audit = mirror_symmetry_audit(_record(S2))
    assert audit["y_flip"] < 1e-12
    assert audit["x_flip"] < 0.02
    shifted = S2 + [0.5, 0, 0]
    assert mirror_symmetry_audit(_record(shifted))["x_flip"] > 0.1


def test_harmonic_content_amplitudes():
    th = 2 * np.pi * np.arange(128) / 128
    z = 0.3 + 1.0 * np.cos(th) + 0.5 * np.cos(2 * th) + 0.2 * np.sin(5 * th)
    h = harmonic_content(_record(np.column_stack([0 * th, 0 * th, z])))
    assert h["amplitudes"][0] == pytest.approx(0.3)
    assert h["fundamental"] == pytest.approx(1.0)
    assert h["max_above_2"] == pytest.approx(0.2)
    assert h["ratio"] == pytest.approx(0.2)
    assert h["ratio_low"] == pytest.approx(0.2)


def test_summary_json():
    rec = _record(np.tile([0, 0, 0.1], (8, 1)))
    assert summary_json(5.0, rec) == {"Omega": 5.0, "C1": pytest.approx(0.1), "C2": pytest.approx(0.1),
                                      "converged": True}
