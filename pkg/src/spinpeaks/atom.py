"""Time-independent operators of the 87Rb D1 line in the coupled |F, m> basis.

Basis ordering (16 states)::

    0..2    ground  F=1,  m = -1..1
    3..7    ground  F=2,  m = -2..2
    8..10   excited F'=1, m = -1..1
    11..15  excited F'=2, m = -2..2

All frequencies are angular (rad/s) and operators are expressed with hbar = 1,
so a Hamiltonian matrix is directly an angular-frequency matrix.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import constants as sc
from sympy import Rational
from sympy.physics.wigner import clebsch_gordan

__all__ = [
    "AtomSpec",
    "AtomSystem",
    "BasisLabel",
    "build_atom_system",
    "equilibrium_state",
    "selection_rule_audit",
    "spin_matrices",
]

DIM = 16
GROUND = slice(0, 8)
EXCITED = slice(8, 16)
BLOCKS = {
    ("ground", 1): slice(0, 3),
    ("ground", 2): slice(3, 8),
    ("excited", 1): slice(8, 11),
    ("excited", 2): slice(11, 16),
}


class BasisLabel(NamedTuple):
    manifold: str  # "ground" | "excited"
    F: int
    m: int


@dataclass(frozen=True)
class AtomSpec:
    """Physical constants of the 87Rb D1 line (published reference data)."""

    nuclear_spin: Fraction = Fraction(3, 2)
    ground_hfs_hz: float = 6.834682610904290e9
    excited_hfs_hz: float = 816.656e6
    d1_frequency_hz: float = 377.107463380e12
    reduced_dipole_cm: float = 2.5377e-29
    g_J: float = 2.00233113
    mass_u: float = 86.909180527

    @classmethod
    def from_dict(cls, d: dict) -> "AtomSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown atom spec keys: {sorted(unknown)}")
        return cls(**d)


def spin_matrices(j: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Angular-momentum matrices (Jx, Jy, Jz) for spin ``j``, ordered m = -j..j."""
    m = np.arange(-j, j + 1)
    # <m+1|J+|m>
    jp = np.diag(np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1)), -1).astype(complex)
    jm = jp.conj().T
    jx = 0.5 * (jp + jm)
    jy = -0.5j * (jp - jm)
    jz = np.diag(m).astype(complex)
    return jx, jy, jz


def _coupling_matrix(nuclear_spin: Fraction) -> np.ndarray:
    """Unitary C with C[(F,m), (m_I,m_J)] = <I m_I; 1/2 m_J | F m>.

    Rows follow the coupled ordering (F=1 then F=2, m ascending); columns the
    uncoupled ordering index = 2*i_I + i_J with m_I, m_J ascending.
    """
    I = Rational(nuclear_spin.numerator, nuclear_spin.denominator)
    J = Rational(1, 2)
    m_I = [-I + k for k in range(int(2 * I) + 1)]
    m_J = [-J, J]
    coupled = [(F, m) for F in (I - J, I + J) for m in range(-int(F), int(F) + 1)]
    C = np.zeros((len(coupled), len(m_I) * len(m_J)))
    for r, (F, m) in enumerate(coupled):
        for a, mi in enumerate(m_I):
            for b, mj in enumerate(m_J):
                if mi + mj == m:
                    C[r, 2 * a + b] = float(clebsch_gordan(I, J, F, mi, mj, m))
    return C


def _electron_dipole_plus() -> np.ndarray:
    """<J'=1/2 m'| d_{+1} |J=1/2 m> / <J||d||J'> in the m = (-1/2, +1/2) basis."""
    h = Rational(1, 2)
    ms = [-h, h]
    d = np.zeros((2, 2))
    for i, me in enumerate(ms):
        for j, mg in enumerate(ms):
            if me == mg + 1:
                # d_{+1} = -(d_{-1})^dagger, emission amplitudes <g|d_q|e> = <J m_g|J' m_e; 1 q>
                d[i, j] = -float(clebsch_gordan(h, 1, h, me, -1, mg))
    return d


@dataclass(frozen=True, eq=False)
class AtomSystem:
    labels: tuple[BasisLabel, ...]
    energies: np.ndarray  # rad/s, F=1 -> F'=2 transition at zero
    Fops: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]
    dipole: np.ndarray  # P_e (d . l+) P_g, C*m
    P_g: np.ndarray
    P_e: np.ndarray
    P_1: np.ndarray
    P_2: np.ndarray
    cg_map: np.ndarray
    g_factors: dict[int, float]
    gamma_e: float  # rad/(s*T)
    spec: AtomSpec = field(default_factory=AtomSpec)

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def wavenumber(self) -> float:
        """Pump wavenumber k = omega/c for the D1 carrier (1/m)."""
        return 2 * np.pi * self.spec.d1_frequency_hz / sc.c

    @property
    def thermal_speed_factor(self) -> float:
        """sqrt(2 k_B / m) in m/s per sqrt(K)."""
        return float(np.sqrt(2 * sc.k / (self.spec.mass_u * sc.atomic_mass)))

    def projector(self, n: int) -> np.ndarray:
        return {1: self.P_1, 2: self.P_2}[n]

    def zeeman_operators(self) -> np.ndarray:
        """Ground-manifold Zeeman operators (3, 16, 16): V_B = sum_a B_a * out[a]."""
        out = np.zeros((3, DIM, DIM), dtype=complex)
        for n in (1, 2):
            blk = BLOCKS["ground", n]
            for a in range(3):
                out[a, blk, blk] = self.g_factors[n] * self.gamma_e * self.Fops[n][a]
        return out

    def gyromagnetic_ratio(self, n: int = 2) -> float:
        """Larmor angular frequency per tesla of ground level F=n."""
        return abs(self.g_factors[n]) * self.gamma_e

    def to_json(self, path: str | Path | None = None) -> str:
        def cplx(a):
            a = np.asarray(a)
            return {"re": a.real.tolist(), "im": a.imag.tolist()}

        doc = {
            "labels": [list(l) for l in self.labels],
            "energies_rad_s": self.energies.tolist(),
            "Fops": {str(n): [cplx(x) for x in ops] for n, ops in self.Fops.items()},
            "dipole_Cm": cplx(self.dipole),
            "projectors": {k: getattr(self, k).real.tolist() for k in ("P_g", "P_e", "P_1", "P_2")},
            "cg_map": self.cg_map.tolist(),
            "g_factors": {str(k): v for k, v in self.g_factors.items()},
            "gamma_e": self.gamma_e,
        }
        text = json.dumps(doc, indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def build_atom_system(spec: AtomSpec | None = None) -> AtomSystem:
    spec = spec or AtomSpec()
    if spec.nuclear_spin != Fraction(3, 2):
        raise ValueError("only I = 3/2 (87Rb) is supported")
    if min(spec.ground_hfs_hz, spec.excited_hfs_hz, spec.reduced_dipole_cm) <= 0:
        raise ValueError("hyperfine splittings and dipole element must be positive")

    labels = tuple(
        BasisLabel(man, F, m)
        for man in ("ground", "excited")
        for F in (1, 2)
        for m in range(-F, F + 1)
    )
    two_pi = 2 * np.pi
    level_energy = {
        ("ground", 1): 0.0,
        ("ground", 2): two_pi * spec.ground_hfs_hz,
        ("excited", 2): 0.0,
        ("excited", 1): -two_pi * spec.excited_hfs_hz,
    }
    energies = np.array([level_energy[l.manifold, l.F] for l in labels])

    C = _coupling_matrix(spec.nuclear_spin)
    if C.shape != (8, 8) or not np.allclose(C @ C.T, np.eye(8), atol=1e-12):
        raise ValueError(f"coupling matrix is not an 8x8 unitary (shape {C.shape})")

    d_e = np.kron(np.eye(4), _electron_dipole_plus())  # uncoupled, acts on electron only
    dipole = np.zeros((DIM, DIM), dtype=complex)
    dipole[EXCITED, GROUND] = spec.reduced_dipole_cm * (C @ d_e @ C.T)

    Fops = {n: spin_matrices(n) for n in (1, 2)}
    g_lande = spec.g_J / 4.0  # |g_F| for I=3/2, J=1/2, nuclear moment neglected
    g_factors = {1: -g_lande, 2: g_lande}

    def proj(sl):
        P = np.zeros((DIM, DIM), dtype=complex)
        P[sl, sl] = np.eye(sl.stop - sl.start)
        return P

    P_g, P_e = proj(GROUND), proj(EXCITED)
    P_1, P_2 = proj(BLOCKS["ground", 1]), proj(BLOCKS["ground", 2])
    for ops in Fops.values():
        _freeze(*ops)
    _freeze(energies, dipole, P_g, P_e, P_1, P_2, C)
    return AtomSystem(
        labels=labels,
        energies=energies,
        Fops=Fops,
        dipole=dipole,
        P_g=P_g,
        P_e=P_e,
        P_1=P_1,
        P_2=P_2,
        cg_map=C,
        g_factors=g_factors,
        gamma_e=sc.physical_constants["Bohr magneton"][0] / sc.hbar,
        spec=spec,
    )


def selection_rule_audit(sys: AtomSystem, tol: float = 1e-12) -> dict:
    """List every nonzero dipole element and check the sigma+ selection rules."""
    scale = np.abs(sys.dipole).max()
    elements = []
    violations = []
    for i, j in zip(*np.nonzero(np.abs(sys.dipole) > tol * scale)):
        li, lj = sys.labels[i], sys.labels[j]
        elements.append({"excited": li, "ground": lj, "value": complex(sys.dipole[i, j])})
        if li.manifold != "excited" or lj.manifold != "ground" or li.m != lj.m + 1:
            violations.append((li, lj))
    gg = np.linalg.norm(sys.P_g @ sys.dipole @ sys.P_g)
    ee = np.linalg.norm(sys.P_e @ sys.dipole @ sys.P_e)
    return {
        "elements": elements,
        "violations": violations,
        "ground_ground_norm": float(gg),
        "excited_excited_norm": float(ee),
        "ok": not violations and gg == 0 and ee == 0,
    }


def equilibrium_state(sys: AtomSystem) -> np.ndarray:
    """Unpolarized vapor: uniform over the 8 ground sublevels, nothing excited."""
    return sys.P_g / 8.0
