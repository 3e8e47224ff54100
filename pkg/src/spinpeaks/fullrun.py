"""Compiled fixed-step RK4 loop for the full tier.

The full generator is affine in the stacked node states. Each node's 16x16
matrix is flattened row-major (index 16*j + k) and the generator becomes

    d x_i/dt = (L + sum_a B_a(t) Z_a + diag(dop_i)) x_i - delta_mix (x_i - xbar) + src

with sparse L, Z_a shared by all nodes and only the Doppler diagonal varying
between them. The loop is compiled with numba; ``step`` in the engine stays
the pure-numpy reference.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from numba import njit

from .atom import EXCITED, GROUND
from .fields import harmonic_decomposition

DIM = 16
N = DIM * DIM


def _commutator(H) -> sp.csr_matrix:
    I = sp.identity(DIM, dtype=complex, format="csr")
    H = sp.csr_matrix(H)
    return -1j * (sp.kron(H, I) - sp.kron(I, H.T))


def _block_mask(rows: slice, cols: slice) -> np.ndarray:
    m = np.zeros((DIM, DIM), bool)
    m[rows, cols] = True
    return m.ravel()


def build_operators(problem):
    from .liouville import repopulation_matrix

    r = problem.rates
    H0 = problem.static_hamiltonians
    idx = np.arange(DIM)
    W = H0[0].copy()
    W[idx, idx] = 0.0
    mean_diag = np.zeros(DIM)
    # node-independent part of the diagonal: energies without Doppler shift
    mean_diag[:] = problem.sys.energies
    mean_diag[EXCITED] -= problem.pump.detuning
    L = _commutator(W + np.diag(mean_diag))
    L = L - r.Gamma * sp.identity(N, format="csr")
    L = L - r.delta_dec * sp.diags((_block_mask(EXCITED, GROUND) | _block_mask(GROUND, EXCITED)).astype(float))
    L = L - r.delta_dcy * sp.diags(_block_mask(EXCITED, EXCITED).astype(float))
    R = repopulation_matrix(problem.sys.cg_map)  # acts on flattened 8x8 blocks
    ee = np.flatnonzero(_block_mask(EXCITED, EXCITED))
    gg = np.flatnonzero(_block_mask(GROUND, GROUND))
    rows, cols = np.nonzero(R)
    repop = sp.csr_matrix((r.delta_dcy * R[rows, cols], (gg[rows], ee[cols])), shape=(N, N))
    L = sp.csr_matrix(L + repop)

    Z = []
    for op in problem.zeeman:
        Z.append(sp.csr_matrix(_commutator(op)))
    dop = np.empty((len(H0), N), dtype=complex)
    for i, h in enumerate(H0):
        shift = h[idx, idx].real - mean_diag
        dop[i] = (-1j * (shift[:, None] - shift[None, :])).ravel()
    src = r.Gamma * problem.rho0.ravel().astype(complex)
    return L, Z, dop, src


def _csr(m):
    m = sp.csr_matrix(m)
    m.sort_indices()
    return m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(complex)


JIT = dict(cache=True, fastmath=True, error_model="numpy")


@njit(**JIT)
def _spmv_add(ip, ix, dv, X, scale, out):
    # X, out: (N, nodes) so the innermost loop runs over contiguous nodes
    nodes = X.shape[1]
    for row in range(len(ip) - 1):
        for p in range(ip[row], ip[row + 1]):
            c = dv[p] * scale
            col = ix[p]
            for i in range(nodes):
                out[row, i] += c * X[col, i]


@njit(**JIT)
def _rhs(X, b, Lp, Li, Ld, Zp, Zi, Zd, zoff, dop, w, mix, src, out):
    nodes = X.shape[1]
    for k in range(X.shape[0]):
        m = 0j
        for i in range(nodes):
            m += w[i] * X[k, i]
        for i in range(nodes):
            out[k, i] = dop[k, i] * X[k, i] + src[k] - mix * (X[k, i] - m)
    _spmv_add(Lp, Li, Ld, X, 1.0, out)
    for a in range(3):
        if b[a] != 0.0:
            s, e = zoff[a], zoff[a + 1]
            _spmv_add(Zp[a], Zi[s:e], Zd[s:e], X, b[a], out)


@njit(**JIT)
def _field(t, static, ks, vecs, Omega, t0):
    b = static.copy()
    ph = Omega * (t - t0)
    for j in range(len(ks)):
        c = np.cos(ks[j] * ph)
        for a in range(3):
            b[a] += vecs[j, a] * c
    return b


@njit(**JIT)
def _run(X, t, h, nsteps, static, ks, vecs, Omega, t0, Lp, Li, Ld, Zp, Zi, Zd, zoff, dop, w, mix, src):
    n, nodes = X.shape
    k1 = np.empty_like(X)
    k2 = np.empty_like(X)
    k3 = np.empty_like(X)
    k4 = np.empty_like(X)
    tmp = np.empty_like(X)
    for step in range(nsteps):
        b1 = _field(t, static, ks, vecs, Omega, t0)
        b2 = _field(t + 0.5 * h, static, ks, vecs, Omega, t0)
        b3 = _field(t + h, static, ks, vecs, Omega, t0)
        _rhs(X, b1, Lp, Li, Ld, Zp, Zi, Zd, zoff, dop, w, mix, src, k1)
        tmp[:, :] = X + 0.5 * h * k1
        _rhs(tmp, b2, Lp, Li, Ld, Zp, Zi, Zd, zoff, dop, w, mix, src, k2)
        tmp[:, :] = X + 0.5 * h * k2
        _rhs(tmp, b2, Lp, Li, Ld, Zp, Zi, Zd, zoff, dop, w, mix, src, k3)
        tmp[:, :] = X + h * k3
        _rhs(tmp, b3, Lp, Li, Ld, Zp, Zi, Zd, zoff, dop, w, mix, src, k4)
        tmp[:, :] = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for i in range(nodes):
            tr_old = 0j
            tr_new = 0j
            for j in range(16):
                tr_old += X[17 * j, i]
                for k in range(j, 16):
                    a = 0.5 * (tmp[16 * j + k, i] + np.conj(tmp[16 * k + j, i]))
                    tmp[16 * j + k, i] = a
                    tmp[16 * k + j, i] = np.conj(a)
                tr_new += tmp[17 * j, i]
            if abs(tr_new - tr_old) > 1e-6:
                return X, t, step
        X[:, :] = tmp
        t += h
    return X, t, -1


class FullRunner:
    """Holds the sparse operators of one problem and advances states in place of repeated ``step`` calls."""

    def __init__(self, problem):
        self.problem = problem
        L, Z, dop, src = build_operators(problem)
        self.L = _csr(L)
        zs = [_csr(z) for z in Z]
        self.Zp = np.stack([z[0] for z in zs])
        self.zoff = np.cumsum([0] + [len(z[1]) for z in zs]).astype(np.int64)
        self.Zi = np.concatenate([z[1] for z in zs])
        self.Zd = np.concatenate([z[2] for z in zs])
        self.dop = np.ascontiguousarray(dop.T)
        self.src = src
        self.w = problem.nodes[1].astype(float)
        self.mix = float(problem.rates.delta_mix)
        static, harm = harmonic_decomposition(problem.drive)
        self.static = np.asarray(static, float)
        self.ks = np.array([k for k, _ in harm], dtype=float)
        self.vecs = np.array([v for _, v in harm], dtype=float).reshape(-1, 3)

    def rhs(self, rho: np.ndarray, t: float) -> np.ndarray:
        from .fields import field_at

        X = np.ascontiguousarray(rho.reshape(len(rho), N).T.astype(complex))
        out = np.empty_like(X)
        b = np.asarray(field_at(t, self.problem.drive), float)
        _rhs(X, b, *self.L, self.Zp, self.Zi, self.Zd, self.zoff, self.dop, self.w, self.mix, self.src, out)
        return out.T.reshape(rho.shape)

    def run(self, rho: np.ndarray, t: float, h: float, nsteps: int):
        """Advance ``nsteps`` RK4 steps of size ``h``; returns (rho, t, failed_step or -1)."""
        X = np.ascontiguousarray(rho.reshape(len(rho), N).T.astype(complex))
        d = self.problem.drive
        X, t, bad = _run(X, t, h, nsteps, self.static, self.ks, self.vecs, d.Omega, d.phase_origin,
                         *self.L, self.Zp, self.Zi, self.Zd, self.zoff, self.dop, self.w, self.mix, self.src)
        return np.ascontiguousarray(X.T).reshape(rho.shape), t, bad
