import numpy as np
import pytest

from spinpeaks.atom import (
    BLOCKS,
    EXCITED,
    GROUND,
    AtomSpec,
    build_atom_system,
    equilibrium_state,
    selection_rule_audit,
    spin_matrices,
)
from spinpeaks.liouville import mapping_R
from spinpeaks.observables import spin_polarization_matrix


def test_dimensions_and_labels(sys16):
    assert sys16.dim == 16
    assert sum(l.manifold == "ground" for l in sys16.labels) == 8
    assert sum(l.manifold == "excited" for l in sys16.labels) == 8


def test_fz_for_f2(sys16):
    assert np.allclose(sys16.Fops[2][2], np.diag([-2, -1, 0, 1, 2]))


@pytest.mark.parametrize("j", [0.5, 1, 1.5, 2])
def test_angular_momentum_algebra(j):
    Fx, Fy, Fz = spin_matrices(j)
    assert np.linalg.norm(Fx @ Fy - Fy @ Fx - 1j * Fz) < 1e-12
    casimir = Fx @ Fx + Fy @ Fy + Fz @ Fz
    assert np.allclose(casimir, j * (j + 1) * np.eye(int(2 * j + 1)), atol=1e-12)


def test_projectors(sys16):
    P = [sys16.P_g, sys16.P_e, sys16.P_1, sys16.P_2]
    for p in P:
        assert np.abs(p @ p - p).max() < 1e-12
    assert np.abs(sys16.P_g + sys16.P_e - np.eye(16)).max() < 1e-12
    assert np.abs(sys16.P_1 + sys16.P_2 - sys16.P_g).max() < 1e-12
    assert np.abs(sys16.P_g @ sys16.P_e).max() < 1e-12


def test_coupling_matrix_orthogonal(sys16):
    C = sys16.cg_map
    assert np.allclose(C @ C.T, np.eye(8), atol=1e-12)


def test_selection_rules(sys16):
    audit = selection_rule_audit(sys16)
    assert audit["ok"]
    assert audit["ground_ground_norm"] == 0
    labels = sys16.labels
    i = labels.index(("excited", 2, 2))
    j = labels.index(("ground", 1, 1))
    assert abs(sys16.dipole[i, j]) > 0
    for a, la in enumerate(labels):
        for b, lb in enumerate(labels):
            if la.m == lb.m:
                assert sys16.dipole[a, b] == 0


def test_no_transition_out_of_stretched_f2(sys16):
    # sigma+ light cannot excite |F=2, m=2>: it is the dark state
    j = sys16.labels.index(("ground", 2, 2))
    assert np.abs(sys16.dipole[:, j]).max() == 0


def test_equilibrium_state(sys16):
    rho0 = equilibrium_state(sys16)
    assert np.allclose(np.diag(rho0)[GROUND], 0.125)
    assert np.abs(rho0 - np.diag(np.diag(rho0))).max() == 0
    assert np.trace(sys16.P_e @ rho0 @ sys16.P_e) == 0
    for n in (1, 2):
        assert np.allclose(spin_polarization_matrix(rho0, n, sys16), 0)


def test_gyromagnetic_ratio_f2(sys16):
    # about 7.0 Hz/nT for the F=2 ground level
    g = sys16.gyromagnetic_ratio(2) / (2 * np.pi) * 1e-9
    assert g == pytest.approx(7.006, abs=0.01)
    assert sys16.g_factors[1] == -sys16.g_factors[2]


def test_stretched_excited_repopulation(sys16):
    rho = np.zeros((16, 16), complex)
    k = sys16.labels.index(("excited", 2, 2))
    rho[k, k] = 1.0
    out = mapping_R(rho, sys16)
    assert abs(np.trace(out)) < 1e-12
    pops = -np.diag(out)[GROUND].real  # R subtracts what it feeds back
    allowed = {sys16.labels.index(("ground", 2, 1)), sys16.labels.index(("ground", 2, 2)),
               sys16.labels.index(("ground", 1, 1))}
    for i in range(8):
        if i in allowed:
            assert pops[i] > 1e-3
        else:
            assert abs(pops[i]) < 1e-12
    assert pops.sum() == pytest.approx(1.0)


def test_rejects_other_nuclear_spin():
    from fractions import Fraction

    with pytest.raises(ValueError):
        build_atom_system(AtomSpec(nuclear_spin=Fraction(5, 2)))


def test_to_json_roundtrip(tmp_path, sys16):
    import json

    p = tmp_path / "ops.json"
    sys16.to_json(p)
    doc = json.loads(p.read_text())
    assert len(doc["labels"]) == 16
    assert np.allclose(np.array(doc["cg_map"]), sys16.cg_map)


def test_blocks_cover_basis():
    covered = sorted(i for sl in BLOCKS.values() for i in range(sl.start, sl.stop))
    assert covered == list(range(16))
    assert EXCITED.start == GROUND.stop
