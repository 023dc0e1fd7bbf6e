"""Low-level propagation engine.

All evolutions run in the frame co-rotating with the static diagonal of
the Hamiltonian: with E the diagonal reference energies, the transformed
state psi~ = exp(+iEt) psi obeys an equation whose matrix entries are
data * exp(i freq t), where freq folds E_row - E_col together with any
explicit drive harmonic.  The transformation is exact, removes the stiff
diagonal phases from the integrator, and leaves matrices whose sparsity
pattern never changes; only their entry data is rescaled by phases.

Matrices are stored as row-sorted COO triplets plus a per-entry frequency
group index into a small table of unique frequencies, so each evaluation
costs one complex exponential per distinct frequency.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range


__all__ = [
    "PhasedMatrix",
    "CompiledProblem",
    "compile_problem",
    "DensityWorkspace",
    "density_rhs",
    "rk4_density_chunk",
    "rk4_vector_chunk",
    "mcwf_drift_until",
    "default_step",
    "stability_step_bound",
]


# --------------------------------------------------------------------------
# phased-matrix representation


@dataclass
class PhasedMatrix:
    """Row-sorted COO matrix whose entries rotate as data0 * exp(i freq t)."""

    dim: int
    rows: np.ndarray       # int64, sorted
    cols: np.ndarray       # int64
    data0: np.ndarray      # complex128
    gidx: np.ndarray       # int64 index into ufreqs
    ufreqs: np.ndarray     # float64 unique frequencies
    row_ptr: np.ndarray    # int64, len dim+1

    @classmethod
    def from_entries(cls, dim, rows, cols, data, freqs) -> "PhasedMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        data = np.asarray(data, dtype=np.complex128)
        freqs = np.asarray(freqs, dtype=np.float64)
        keep = data != 0
        rows, cols, data, freqs = rows[keep], cols[keep], data[keep], freqs[keep]
        ufreqs, gidx = np.unique(freqs, return_inverse=True)
        # merge duplicates sharing (row, col, frequency); rotating pairs and
        # dissipator cross terms overlap heavily
        key = (rows * dim + cols) * len(ufreqs) + gidx if len(ufreqs) else rows * dim + cols
        ukey, inverse = np.unique(key, return_inverse=True)
        merged = np.zeros(len(ukey), dtype=np.complex128)
        np.add.at(merged, inverse, data)
        first = np.full(len(ukey), -1, dtype=np.int64)
        first[inverse[::-1]] = np.arange(len(data))[::-1]
        rows, cols, gidx, data = rows[first], cols[first], gidx[first], merged
        keep = data != 0
        rows, cols, data, gidx = rows[keep], cols[keep], data[keep], gidx[keep]
        order = np.lexsort((cols, rows))
        rows, cols, data, gidx = rows[order], cols[order], data[order], gidx[order]
        row_ptr = np.searchsorted(rows, np.arange(dim + 1))
        return cls(dim, rows, cols, data, np.ascontiguousarray(gidx, dtype=np.int64),
                   np.ascontiguousarray(ufreqs, dtype=np.float64),
                   row_ptr.astype(np.int64))

    @property
    def nnz(self) -> int:
        return len(self.data0)

    def max_abs_freq(self) -> float:
        return float(np.max(np.abs(self.ufreqs))) if len(self.ufreqs) else 0.0

    def phases(self, t: float) -> np.ndarray:
        return np.exp(1j * self.ufreqs * t)

    def tocsr(self, t: float) -> sp.csr_matrix:
        data = self.data0 * self.phases(t)[self.gidx]
        return sp.csr_matrix((data, (self.rows, self.cols)), shape=(self.dim, self.dim))

    def expectation_density(self, rho: np.ndarray, t: float) -> complex:
        """tr(M(t) rho) for a density matrix in the same frame."""
        vals = self.data0 * self.phases(t)[self.gidx]
        return complex(np.sum(vals * rho[self.cols, self.rows]))

    def expectation_vector(self, psi: np.ndarray, t: float) -> complex:
        vals = self.data0 * self.phases(t)[self.gidx]
        return complex(np.sum(np.conj(psi[self.rows]) * vals * psi[self.cols]))

    def max_row_abs_sum(self) -> float:
        if self.nnz == 0:
            return 0.0
        sums = np.zeros(self.dim)
        np.add.at(sums, self.rows, np.abs(self.data0))
        return float(sums.max())

    def max_col_abs_sum(self) -> float:
        if self.nnz == 0:
            return 0.0
        sums = np.zeros(self.dim)
        np.add.at(sums, self.cols, np.abs(self.data0))
        return float(sums.max())


def _entries_from_sparse(mat, e_diag, extra_freq=0.0, prefactor=1.0 + 0j,
                         drop_reference_diag=False):
    """COO triplets of a matrix in the rotating frame.

    Entry (r, c, v) becomes (r, c, prefactor*v) at frequency
    e_diag[r] - e_diag[c] + extra_freq.  With drop_reference_diag the
    diagonal reference energies are subtracted first (used for the static
    Hamiltonian whose diagonal defines the frame).
    """
    coo = sp.csr_matrix(mat, dtype=complex).tocoo()
    rows, cols, data = coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()
    if drop_reference_diag:
        mask = rows == cols
        data = data.astype(complex)
        data[mask] -= e_diag[rows[mask]]
    freqs = e_diag[rows] - e_diag[cols] + extra_freq
    return rows, cols, prefactor * data, freqs


@dataclass
class CompiledProblem:
    """Rotating-frame drift and jump operators ready for the kernels."""

    dim: int
    e_diag: np.ndarray
    drift: PhasedMatrix          # -i/2-weighted A^dag A already folded in
    jumps: list                  # list[PhasedMatrix]
    hamiltonian_only: PhasedMatrix

    def max_abs_freq(self) -> float:
        out = self.drift.max_abs_freq()
        for j in self.jumps:
            out = max(out, j.max_abs_freq())
        return out


def compile_problem(hamiltonian, jump_ops=(), frame_energies=None) -> CompiledProblem:
    """Build the rotating-frame representation.

    Parameters
    ----------
    hamiltonian : TimeDependentHamiltonian or sparse matrix
    jump_ops : iterable of sparse matrices
    frame_energies : optional diagonal reference; defaults to the real part
        of the static Hamiltonian diagonal.
    """
    from .model import TimeDependentHamiltonian

    if isinstance(hamiltonian, TimeDependentHamiltonian):
        static = hamiltonian.static_sum()
        oscillating = hamiltonian.oscillating_terms
        dim = hamiltonian.space.total_dim
    else:
        static = sp.csr_matrix(hamiltonian, dtype=complex)
        oscillating = []
        dim = static.shape[0]

    if frame_energies is None:
        e_diag = np.real(static.diagonal()).astype(np.float64)
    else:
        e_diag = np.asarray(frame_energies, dtype=np.float64)

    rows, cols, data, freqs = [], [], [], []

    def push(entry):
        r, c, v, f = entry
        rows.append(r)
        cols.append(c)
        data.append(v)
        freqs.append(f)

    push(_entries_from_sparse(static, e_diag, drop_reference_diag=True))
    for mat, amp, omega, phase in oscillating:
        # amp*cos(omega t + phase)*M splits into two rotating halves
        push(_entries_from_sparse(mat, e_diag, extra_freq=+omega,
                                  prefactor=0.5 * amp * np.exp(1j * phase)))
        push(_entries_from_sparse(mat, e_diag, extra_freq=-omega,
                                  prefactor=0.5 * amp * np.exp(-1j * phase)))

    ham_rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    ham_cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    ham_data = np.concatenate(data) if data else np.zeros(0, complex)
    ham_freqs = np.concatenate(freqs) if freqs else np.zeros(0, float)
    ham_only = PhasedMatrix.from_entries(dim, ham_rows, ham_cols, ham_data, ham_freqs)

    jumps = []
    drift_parts = [(ham_rows, ham_cols, ham_data, ham_freqs)]
    for op in jump_ops:
        op = sp.csr_matrix(op, dtype=complex)
        jumps.append(PhasedMatrix.from_entries(
            dim, *_entries_from_sparse(op, e_diag)))
        btb = (op.conj().T @ op).tocsr()
        drift_parts.append(_entries_from_sparse(btb, e_diag, prefactor=-0.5j))

    drift = PhasedMatrix.from_entries(
        dim,
        np.concatenate([p[0] for p in drift_parts]),
        np.concatenate([p[1] for p in drift_parts]),
        np.concatenate([p[2] for p in drift_parts]),
        np.concatenate([p[3] for p in drift_parts]),
    )
    return CompiledProblem(dim, e_diag, drift, jumps, ham_only)


def frame_revert_vector(psi_rot: np.ndarray, e_diag: np.ndarray, t: float) -> np.ndarray:
    """Rotating-frame vector back to the simulation frame."""
    return np.exp(-1j * e_diag * t) * psi_rot


def frame_revert_density(rho_rot: np.ndarray, e_diag: np.ndarray, t: float) -> np.ndarray:
    ph = np.exp(-1j * e_diag * t)
    return (ph[:, None] * rho_rot) * np.conj(ph)[None, :]


# --------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _phase_table(ufreqs, t):
    ng = ufreqs.shape[0]
    out = np.empty(ng, np.complex128)
    for i in range(ng):
        out[i] = complex(math.cos(ufreqs[i] * t), math.sin(ufreqs[i] * t))
    return out


@njit(cache=True, fastmath=True)
def _vec_apply_minus_i(rows, cols, data0, gidx, ph, x, out):
    """out = -i * M(t) @ x."""
    out[:] = 0.0
    for k in range(rows.shape[0]):
        out[rows[k]] += data0[k] * ph[gidx[k]] * x[cols[k]]
    for j in range(out.shape[0]):
        out[j] = complex(out[j].imag, -out[j].real)


@njit(cache=True, fastmath=True)
def rk4_vector_chunk(rows, cols, data0, gidx, ufreqs, psi, t0, h, nsteps):
    """Advance d psi/dt = -i M(t) psi by nsteps fixed RK4 steps, in place."""
    dim = psi.shape[0]
    k1 = np.empty(dim, np.complex128)
    k2 = np.empty(dim, np.complex128)
    k3 = np.empty(dim, np.complex128)
    k4 = np.empty(dim, np.complex128)
    stage = np.empty(dim, np.complex128)
    for n in range(nsteps):
        t = t0 + n * h
        ph = _phase_table(ufreqs, t)
        _vec_apply_minus_i(rows, cols, data0, gidx, ph, psi, k1)
        ph = _phase_table(ufreqs, t + 0.5 * h)
        for j in range(dim):
            stage[j] = psi[j] + 0.5 * h * k1[j]
        _vec_apply_minus_i(rows, cols, data0, gidx, ph, stage, k2)
        for j in range(dim):
            stage[j] = psi[j] + 0.5 * h * k2[j]
        _vec_apply_minus_i(rows, cols, data0, gidx, ph, stage, k3)
        ph = _phase_table(ufreqs, t + h)
        for j in range(dim):
            stage[j] = psi[j] + h * k3[j]
        _vec_apply_minus_i(rows, cols, data0, gidx, ph, stage, k4)
        for j in range(dim):
            psi[j] += (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
    return psi


@njit(cache=True, fastmath=True)
def mcwf_drift_until(rows, cols, data0, gidx, ufreqs, psi, t0, h, nsteps, norm_threshold):
    """RK4 for the non-Hermitian drift, stopping when |psi|^2 <= threshold.

    Returns the number of completed steps (== nsteps when no crossing).
    """
    dim = psi.shape[0]
    k1 = np.empty(dim, np.complex128)
    k2 = np.empty(dim, np.complex128)
    k3 = np.empty(dim, np.complex128)
    k4 = np.empty(dim, np.complex128)
    stage = np.empty(dim, np.complex128)
    for n in range(nsteps):
        t = t0 + n * h
        ph = _phase_table(ufreqs, t)
        _vec_apply_minus_i(rows, cols, data0, gidx, ph, psi, k1)
        ph = _phase_table(ufreqs, t + 0.5 * h)
        for j in range(dim):
            stage[j] = psi[j] + 0.5 * h * k1[j]
        _vec_apply_minus_i(rows, cols, data0, gidx, ph, stage, k2)
        for j in range(dim):
            stage[j] = psi[j] + 0.5 * h * k2[j]
        _vec_apply_minus_i(rows, cols, data0, gidx, ph, stage, k3)
        ph = _phase_table(ufreqs, t + h)
        for j in range(dim):
            stage[j] = psi[j] + h * k3[j]
        _vec_apply_minus_i(rows, cols, data0, gidx, ph, stage, k4)
        nrm = 0.0
        for j in range(dim):
            psi[j] += (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            nrm += psi[j].real * psi[j].real + psi[j].imag * psi[j].imag
        if nrm <= norm_threshold:
            return n + 1
    return nsteps


_TILE = 48


@njit(cache=True, parallel=True, fastmath=True)
def _den_apply(row_ptr, cols, data, X, OUT):
    """OUT = M @ X for dense X (row-parallel); data already phased."""
    dim = OUT.shape[0]
    for r in prange(dim):
        row = OUT[r]
        row[:] = 0.0
        for k in range(row_ptr[r], row_ptr[r + 1]):
            a = data[k]
            src = X[cols[k]]
            for j in range(dim):
                row[j] += a * src[j]


@njit(cache=True, parallel=True, fastmath=True)
def _anti_hermitian_into(Z, OUT):
    """OUT = -i (Z - Z^dag), tiled to keep the transposed reads in cache."""
    dim = Z.shape[0]
    nt = (dim + _TILE - 1) // _TILE
    for bi in prange(nt):
        r0 = bi * _TILE
        r1 = min(r0 + _TILE, dim)
        for c0 in range(0, dim, _TILE):
            c1 = min(c0 + _TILE, dim)
            for r in range(r0, r1):
                for c in range(c0, c1):
                    d = Z[r, c] - np.conj(Z[c, r])
                    OUT[r, c] = complex(d.imag, -d.real)


@njit(cache=True, parallel=True, fastmath=True)
def _conj_transpose_into(P, OUT):
    dim = P.shape[0]
    nt = (dim + _TILE - 1) // _TILE
    for bi in prange(nt):
        r0 = bi * _TILE
        r1 = min(r0 + _TILE, dim)
        for c0 in range(0, dim, _TILE):
            c1 = min(c0 + _TILE, dim)
            for r in range(r0, r1):
                for c in range(c0, c1):
                    OUT[r, c] = np.conj(P[c, r])


@njit(cache=True, parallel=True, fastmath=True)
def _add_conj_transpose(W, OUT):
    dim = W.shape[0]
    nt = (dim + _TILE - 1) // _TILE
    for bi in prange(nt):
        r0 = bi * _TILE
        r1 = min(r0 + _TILE, dim)
        for c0 in range(0, dim, _TILE):
            c1 = min(c0 + _TILE, dim)
            for r in range(r0, r1):
                for c in range(c0, c1):
                    OUT[r, c] += np.conj(W[c, r])


@njit(cache=True, parallel=True, fastmath=True)
def _axpby(alpha, X, Y, OUT):
    """OUT = alpha * X + Y (flat complex arrays)."""
    n = X.shape[0]
    for i in prange(n):
        OUT[i] = alpha * X[i] + Y[i]


@njit(cache=True, parallel=True, fastmath=True)
def _rk4_combine(psi, k1, k2, k3, k4, h):
    n = psi.shape[0]
    for i in prange(n):
        psi[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True, parallel=True, fastmath=True)
def _den_apply_acc(row_ptr, cols, data, X, OUT):
    """OUT += M @ X (no zeroing; data already phased)."""
    dim = OUT.shape[0]
    for r in prange(dim):
        row = OUT[r]
        for k in range(row_ptr[r], row_ptr[r + 1]):
            a = data[k]
            src = X[cols[k]]
            for j in range(dim):
                row[j] += a * src[j]


class DensityWorkspace:
    """Preallocated buffers for density-matrix RK4."""

    def __init__(self, dim: int):
        shape = (dim, dim)
        self.Z = np.empty(shape, np.complex128)
        self.P = np.empty(shape, np.complex128)
        self.Pd = np.empty(shape, np.complex128)
        self.W = np.empty(shape, np.complex128)
        self.k = [np.empty(shape, np.complex128) for _ in range(4)]
        self.stage = np.empty(shape, np.complex128)


def density_rhs(problem: CompiledProblem, t: float, rho: np.ndarray,
                out: np.ndarray, ws: DensityWorkspace):
    """out = -i(M rho - (M rho)^dag) + sum_j A_j rho A_j^dag.

    Valid for Hermitian rho (preserved by the master equation and by RK4
    stages with real coefficients): the anti-commutator and commutator
    parts are both recovered from the single product M rho.
    """
    d = problem.drift
    data = d.data0 * np.exp(1j * d.ufreqs * t)[d.gidx]
    _den_apply(d.row_ptr, d.cols, data, rho, ws.Z)
    _anti_hermitian_into(ws.Z, out)
    first = True
    for a in problem.jumps:
        if a.nnz == 0:
            continue
        adata = a.data0 * np.exp(1j * a.ufreqs * t)[a.gidx]
        _den_apply(a.row_ptr, a.cols, adata, rho, ws.P)
        _conj_transpose_into(ws.P, ws.Pd)
        if first:
            _den_apply(a.row_ptr, a.cols, adata, ws.Pd, ws.W)
            first = False
        else:
            _den_apply_acc(a.row_ptr, a.cols, adata, ws.Pd, ws.W)
    if not first:
        _add_conj_transpose(ws.W, out)


def rk4_density_chunk(problem: CompiledProblem, rho: np.ndarray, t0: float,
                      h: float, nsteps: int, ws: DensityWorkspace) -> np.ndarray:
    """Advance the master equation by nsteps fixed RK4 steps, in place."""
    flat_rho = rho.reshape(-1)
    flat_stage = ws.stage.reshape(-1)
    flat_k = [k.reshape(-1) for k in ws.k]
    for n in range(nsteps):
        t = t0 + n * h
        density_rhs(problem, t, rho, ws.k[0], ws)
        _axpby(0.5 * h, flat_k[0], flat_rho, flat_stage)
        density_rhs(problem, t + 0.5 * h, ws.stage, ws.k[1], ws)
        _axpby(0.5 * h, flat_k[1], flat_rho, flat_stage)
        density_rhs(problem, t + 0.5 * h, ws.stage, ws.k[2], ws)
        _axpby(h, flat_k[2], flat_rho, flat_stage)
        density_rhs(problem, t + h, ws.stage, ws.k[3], ws)
        _rk4_combine(flat_rho, flat_k[0], flat_k[1], flat_k[2], flat_k[3], h)
    return rho


# --------------------------------------------------------------------------
# reference (scipy) implementations, used for cross-checking the kernels


def density_rhs_reference(problem: CompiledProblem, t: float, rho: np.ndarray) -> np.ndarray:
    M = problem.drift.tocsr(t)
    Z = M @ rho
    out = -1j * (Z - Z.conj().T)
    for a in problem.jumps:
        A = a.tocsr(t)
        out = out + A @ rho @ A.conj().T
    return np.asarray(out)


def vector_rhs_reference(problem: CompiledProblem, t: float, psi: np.ndarray) -> np.ndarray:
    return -1j * (problem.drift.tocsr(t) @ psi)


# --------------------------------------------------------------------------
# step-size selection


def default_step(problem: CompiledProblem, output_step: float,
                 points_per_period: float = 50.0) -> float:
    """min(output step, one fastest-oscillation period / points_per_period).

    The fastest frequency is read off the compiled rotating-frame entries,
    so it automatically covers the drive harmonic and every mode-energy
    difference present in the Hamiltonian and the jump operators.
    """
    h = float(output_step)
    wmax = problem.max_abs_freq()
    if wmax > 0.0:
        h = min(h, 2.0 * math.pi / (points_per_period * wmax))
    h_stab = stability_step_bound(problem)
    return min(h, h_stab)


def stability_step_bound(problem: CompiledProblem) -> float:
    """Conservative explicit-RK4 stability cap for the Lindblad generator."""
    bound = 2.0 * problem.drift.max_row_abs_sum()
    for a in problem.jumps:
        bound += a.max_row_abs_sum() * a.max_col_abs_sum()
    if bound <= 0.0:
        return math.inf
    return 2.5 / bound
