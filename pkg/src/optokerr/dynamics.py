"""Time evolution: Lindblad master equation, quantum trajectories, steady-state detection.

The master equation integrated here is
    d rho/dt = -i [H(t), rho] + sum_i (A_i rho A_i^dag - {A_i^dag A_i, rho}/2).
No trace renormalization is applied during integration; trace drift is a
reported diagnostic, and drift beyond the configured tolerance raises a
step-size failure instead of being silently absorbed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import _engine
from .effective import SystemParams, beat_coefficients
from .hilbert import ModeSpace, QuantumState, SpaceMismatchError, lowering, make_space, number, product_state, transition
from .model import JumpSet, TimeDependentHamiltonian, hamiltonian_beam_splitter, single_atom_model

__all__ = [
    "EvolutionSpec",
    "TimeSeries",
    "StepSizeFailureError",
    "DivergenceError",
    "UnknownObservableError",
    "evolve_master",
    "evolve_trajectories",
    "steady_state_detect",
    "AdiabaticityReport",
    "adiabatic_elimination_check",
]


class StepSizeFailureError(RuntimeError):
    """Trace/norm drift exceeded tolerance; reduce h or use adaptive mode."""


class DivergenceError(RuntimeError):
    """Non-finite values appeared during integration."""


class UnknownObservableError(KeyError):
    """A named observable is not present in the series."""


@dataclass
class EvolutionSpec:
    """Everything one evolution needs.

    integrator "rk4" uses a fixed step (given, or chosen from the fastest
    rotating-frame frequency: one period / points_per_period, capped by an
    explicit-stability bound); "adaptive" uses an embedded Dormand-Prince
    5(4) pair with rtol/atol.
    """

    initial: QuantumState
    hamiltonian: object                     # TimeDependentHamiltonian or sparse matrix
    jumps: object = None                    # JumpSet, sequence of matrices, or None
    t_start: float = 0.0
    t_end: float = 1.0
    output_step: float = 0.01
    integrator: str = "rk4"
    step: float | None = None
    rtol: float = 1e-8
    atol: float = 1e-10
    observables: Mapping[str, object] = field(default_factory=dict)
    trace_tol: float = 1e-6
    points_per_period: float = 50.0

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.output_step <= 0:
            raise ValueError("output_step must be positive")
        if self.step is not None and self.step > self.output_step * (1 + 1e-12):
            raise ValueError("fixed step must not exceed the output step")
        if self.integrator not in ("rk4", "adaptive"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("adaptive tolerances must be positive")

    def jump_list(self) -> list:
        if self.jumps is None:
            return []
        if isinstance(self.jumps, JumpSet):
            return list(self.jumps.operators)
        return [sp.csr_matrix(j, dtype=complex) for j in self.jumps]


@dataclass
class TimeSeries:
    """Output grid, real observable traces, and run diagnostics."""

    times: np.ndarray
    traces: dict                      # name -> real array
    trace_of_rho: np.ndarray          # tr(rho) (or |psi|^2) at every output
    max_imag_residual: float
    max_hermiticity_residual: float
    metadata: dict
    stderr: dict | None = None        # trajectory runs only
    final_state: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.times)
        for name, tr in self.traces.items():
            if len(tr) != n:
                raise ValueError(f"trace {name!r} length {len(tr)} != times length {n}")
        if len(self.trace_of_rho) != n:
            raise ValueError("trace diagnostic length mismatch")

    def trace_drift(self) -> float:
        return float(np.max(np.abs(self.trace_of_rho - 1.0)))

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.traces[name]
        except KeyError:
            raise UnknownObservableError(name) from None

    def to_csv(self) -> str:
        lines = []
        for key, val in sorted(self.metadata.items()):
            lines.append(f"# {key} = {val}")
        names = list(self.traces)
        header = ["time_ms"] + names + [f"stderr_{n}" for n in (self.stderr or {})]
        lines.append(",".join(header))
        cols = [self.times] + [self.traces[n] for n in names]
        if self.stderr:
            cols += [self.stderr[n] for n in self.stderr]
        for i in range(len(self.times)):
            lines.append(",".join(f"{c[i]:.12g}" for c in cols))
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv())


def _output_grid(spec: EvolutionSpec):
    span = spec.t_end - spec.t_start
    nout = int(round(span / spec.output_step))
    if abs(nout * spec.output_step - span) > 1e-9 * max(1.0, span):
        nout = int(math.ceil(span / spec.output_step))
    times = spec.t_start + spec.output_step * np.arange(nout + 1)
    times[-1] = spec.t_end
    return times


def _fixed_step(spec: EvolutionSpec, problem) -> tuple[float, int]:
    """Step aligned with the output grid: h = output_step / n_sub."""
    if spec.step is not None:
        h_target = spec.step
    else:
        h_target = _engine.default_step(problem, spec.output_step, spec.points_per_period)
    n_sub = max(1, int(math.ceil(spec.output_step / h_target - 1e-12)))
    return spec.output_step / n_sub, n_sub


def _compile_observables(observables, e_diag, dim):
    compiled = {}
    for name, op in observables.items():
        op = sp.csr_matrix(op, dtype=complex)
        if op.shape != (dim, dim):
            raise SpaceMismatchError(f"observable {name!r} has shape {op.shape}")
        compiled[name] = _engine.PhasedMatrix.from_entries(
            dim, *_engine._entries_from_sparse(op, e_diag))
    return compiled


def _finite_or_raise(arr, context: str):
    if not np.all(np.isfinite(arr.view(float))):
        raise DivergenceError(f"non-finite values during {context}")


def evolve_master(spec: EvolutionSpec) -> TimeSeries:
    """Integrate the master equation (or the Schroedinger equation when no jumps).

    A pure initial state with jump operators present is promoted to a
    density matrix.  Observables are recorded at every output time; the
    trace of rho (norm^2 for pure states) is recorded as a diagnostic and
    checked against spec.trace_tol.
    """
    t_wall = time.perf_counter()
    jumps = spec.jump_list()
    problem = _engine.compile_problem(spec.hamiltonian, jumps)
    dim = problem.dim
    if spec.initial.space.total_dim != dim:
        raise SpaceMismatchError("initial state space does not match the Hamiltonian")
    compiled_obs = _compile_observables(spec.observables, problem.e_diag, dim)
    times = _output_grid(spec)

    density_path = bool(jumps) or not spec.initial.is_pure
    if density_path:
        state = spec.initial.density().astype(np.complex128).copy()
    else:
        state = spec.initial.array.astype(np.complex128).copy()

    traces = {name: np.empty(len(times)) for name in compiled_obs}
    trace_rho = np.empty(len(times))
    max_imag = 0.0
    max_herm = 0.0

    ws = _engine.DensityWorkspace(dim) if density_path else None
    if spec.integrator == "rk4":
        h, n_sub = _fixed_step(spec, problem)
    else:
        stepper = _AdaptiveStepper(problem, density_path, spec.rtol, spec.atol, ws)

    for i, t in enumerate(times):
        if density_path:
            tr = float(np.real(np.trace(state)))
            herm = float(np.max(np.abs(state - state.conj().T)))
            max_herm = max(max_herm, herm)
            for name, ob in compiled_obs.items():
                val = ob.expectation_density(state, t)
                traces[name][i] = val.real
                max_imag = max(max_imag, abs(val.imag) / max(abs(val), 1.0))
        else:
            tr = float(np.vdot(state, state).real)
            for name, ob in compiled_obs.items():
                val = ob.expectation_vector(state, t)
                traces[name][i] = val.real
                max_imag = max(max_imag, abs(val.imag) / max(abs(val), 1.0))
        trace_rho[i] = tr
        if abs(tr - 1.0) > spec.trace_tol:
            raise StepSizeFailureError(
                f"trace drift {abs(tr-1.0):.3e} beyond {spec.trace_tol:.1e} at t={t:.6g}; "
                "reduce the fixed step or switch to the adaptive integrator"
            )
        _finite_or_raise(state, f"master-equation output at t={t:.6g}")
        if i == len(times) - 1:
            break
        t_next = times[i + 1]
        if spec.integrator == "rk4":
            if density_path:
                _engine.rk4_density_chunk(problem, state, t, h, n_sub, ws)
            else:
                d = problem.drift
                _engine.rk4_vector_chunk(d.rows, d.cols, d.data0, d.gidx, d.ufreqs,
                                         state, t, h, n_sub)
        else:
            state = stepper.advance(state, t, t_next)

    final = (_engine.frame_revert_density(state, problem.e_diag, times[-1])
             if density_path else
             _engine.frame_revert_vector(state, problem.e_diag, times[-1]))
    meta = {
        "integrator": spec.integrator,
        "step": (h if spec.integrator == "rk4" else f"adaptive rtol={spec.rtol} atol={spec.atol}"),
        "output_step": spec.output_step,
        "dims": spec.initial.space.dims,
        "wall_time_s": round(time.perf_counter() - t_wall, 3),
        "units": "time in ms; angular frequencies in krad/s",
    }
    return TimeSeries(times=times, traces=traces, trace_of_rho=trace_rho,
                      max_imag_residual=max_imag, max_hermiticity_residual=max_herm,
                      metadata=meta, final_state=final)


# --------------------------------------------------------------------------
# adaptive embedded pair (Dormand-Prince 5(4))

_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)


class _AdaptiveStepper:
    def __init__(self, problem, density_path, rtol, atol, ws=None):
        self.problem = problem
        self.density = density_path
        self.rtol = rtol
        self.atol = atol
        self.ws = ws
        self.h = None

    def _rhs(self, t, y):
        if self.density:
            out = np.empty_like(y)
            _engine.density_rhs(self.problem, t, y, out, self.ws)
            return out
        return _engine.vector_rhs_reference(self.problem, t, y)

    def advance(self, y, t, t_end):
        if self.h is None:
            self.h = (t_end - t) / 16.0
        while t < t_end - 1e-15 * max(1.0, abs(t_end)):
            h = min(self.h, t_end - t)
            k = [self._rhs(t, y)]
            for i in range(1, 7):
                yi = y + h * sum(a * kk for a, kk in zip(_DP_A[i], k))
                k.append(self._rhs(t + _DP_C[i] * h, yi))
            y5 = y + h * sum(b * kk for b, kk in zip(_DP_B5, k) if b != 0.0)
            y4 = y + h * sum(b * kk for b, kk in zip(_DP_B4, k) if b != 0.0)
            scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y5))
            err = float(np.sqrt(np.mean((np.abs(y5 - y4) / scale) ** 2)))
            if err <= 1.0:
                t += h
                y = y5
                _finite_or_raise(y, "adaptive integration")
                grow = 0.9 * err ** -0.2 if err > 0 else 5.0
                self.h = h * min(5.0, max(0.2, grow))
            else:
                self.h = h * max(0.2, 0.9 * err ** -0.2)
        return y


# --------------------------------------------------------------------------
# quantum trajectories (Monte-Carlo wave function)


def evolve_trajectories(spec: EvolutionSpec, n_traj: int, seed: int,
                        workers: int = 1) -> TimeSeries:
    """Average n_traj quantum-trajectory unravelings of the master equation.

    Each trajectory integrates the non-Hermitian drift H - (i/2) sum A^dag A,
    jumps when the squared norm crosses a uniform threshold, renormalizes,
    and redraws.  Trajectory k draws from a counter-based stream derived
    from (seed, k), so results are bit-identical for a given (seed, n_traj)
    and independent of execution order or parallelism; ensemble averaging
    is an ordered reduction over trajectory index.
    """
    if not spec.initial.is_pure:
        raise ValueError("trajectory unraveling needs a pure initial state")
    jumps = spec.jump_list()
    if not jumps:
        raise ValueError("trajectory unraveling needs at least one jump operator")
    if n_traj < 1:
        raise ValueError("n_traj must be positive")

    t_wall = time.perf_counter()
    problem = _engine.compile_problem(spec.hamiltonian, jumps)
    dim = problem.dim
    compiled_obs = _compile_observables(spec.observables, problem.e_diag, dim)
    times = _output_grid(spec)
    h, n_sub = _fixed_step(spec, problem)

    names = list(compiled_obs)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        args = [(spec, n_traj, seed, k) for k in range(n_traj)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one_trajectory_packed, args,
                                    chunksize=max(1, n_traj // (4 * workers))))
        all_traces = np.array(results)
    else:
        all_traces = np.empty((n_traj, len(names), len(times)))
        for k in range(n_traj):
            all_traces[k] = _run_one_trajectory(problem, compiled_obs, times, h,
                                                n_sub, spec.initial.array, seed, k)

    mean = all_traces.mean(axis=0)
    if n_traj > 1:
        serr = all_traces.std(axis=0, ddof=1) / math.sqrt(n_traj)
    else:
        serr = np.zeros_like(mean)
    traces = {name: mean[i] for i, name in enumerate(names)}
    stderr = {name: serr[i] for i, name in enumerate(names)}
    meta = {
        "integrator": "rk4(trajectories)",
        "step": h,
        "output_step": spec.output_step,
        "dims": spec.initial.space.dims,
        "n_traj": n_traj,
        "seed": seed,
        "wall_time_s": round(time.perf_counter() - t_wall, 3),
        "units": "time in ms; angular frequencies in krad/s",
    }
    return TimeSeries(times=times, traces=traces,
                      trace_of_rho=np.ones(len(times)),
                      max_imag_residual=0.0, max_hermiticity_residual=0.0,
                      metadata=meta, stderr=stderr)


def _run_one_trajectory_packed(args):
    spec, n_traj, seed, k = args
    problem = _engine.compile_problem(spec.hamiltonian, spec.jump_list())
    compiled_obs = _compile_observables(spec.observables, problem.e_diag, problem.dim)
    times = _output_grid(spec)
    h, n_sub = _fixed_step(spec, problem)
    return _run_one_trajectory(problem, compiled_obs, times, h, n_sub,
                               spec.initial.array, seed, k)


def _run_one_trajectory(problem, compiled_obs, times, h, n_sub, psi0, seed, k):
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=seed, spawn_key=(k,))))
    psi = psi0.astype(np.complex128).copy()
    d = problem.drift
    names = list(compiled_obs)
    out = np.empty((len(names), len(times)))
    threshold = rng.random()
    for i, t in enumerate(times):
        nrm2 = float(np.vdot(psi, psi).real)
        for j, name in enumerate(names):
            val = compiled_obs[name].expectation_vector(psi, t)
            out[j, i] = val.real / nrm2
        if i == len(times) - 1:
            break
        done = 0
        t_cur = t
        while done < n_sub:
            taken = _engine.mcwf_drift_until(
                d.rows, d.cols, d.data0, d.gidx, d.ufreqs,
                psi, t_cur, h, n_sub - done, threshold)
            done += taken
            t_cur = t + done * h
            if done < n_sub or float(np.vdot(psi, psi).real) <= threshold:
                # norm crossed the threshold inside the chunk: jump
                weights = np.empty(len(problem.jumps))
                for j, a in enumerate(problem.jumps):
                    phi = a.tocsr(t_cur) @ psi
                    weights[j] = float(np.vdot(phi, phi).real)
                total = weights.sum()
                if total <= 0.0:
                    # all channels dark (e.g. zero-rate jumps): renormalize, carry on
                    psi /= math.sqrt(float(np.vdot(psi, psi).real))
                    threshold = rng.random()
                    continue
                pick = rng.random() * total
                ch = int(np.searchsorted(np.cumsum(weights), pick))
                ch = min(ch, len(problem.jumps) - 1)
                psi = problem.jumps[ch].tocsr(t_cur) @ psi
                psi /= math.sqrt(float(np.vdot(psi, psi).real))
                threshold = rng.random()
        _finite_or_raise(psi, f"trajectory {k}")
    return out


# --------------------------------------------------------------------------
# steady-state detection


def steady_state_detect(series: TimeSeries, observables: Sequence[str],
                        window: float, tol: float):
    """Earliest output index after which every named trace has settled.

    A trace has settled at index i when its max-min variation over the
    trailing window [t_i - window, t_i] stays below
    tol * max(|window mean|, running max |trace|, 1e-9); the running-max
    scale makes the criterion behave sensibly for traces decaying to zero.
    Returns the earliest index from which every later index also passes,
    or None.
    """
    times = series.times
    if window >= times[-1] - times[0]:
        raise ValueError("window must be shorter than the series span")
    tracked = []
    for name in observables:
        tracked.append(series[name])
    n = len(times)
    passed = np.ones(n, dtype=bool)
    for tr in tracked:
        running_max = np.maximum.accumulate(np.abs(tr))
        start_idx = np.searchsorted(times, times - window, side="left")
        for i in range(n):
            lo = start_idx[i]
            seg = tr[lo:i + 1]
            variation = float(seg.max() - seg.min())
            scale = max(abs(float(seg.mean())), float(running_max[i]), 1e-9)
            if variation >= tol * scale:
                passed[i] = False
    ok = None
    for i in range(n - 1, -1, -1):
        if passed[i]:
            ok = i
        else:
            break
    return ok


# --------------------------------------------------------------------------
# adiabatic-elimination validation (single atom)


@dataclass
class AdiabaticityReport:
    max_excited_population: float
    max_field_discrepancy: float
    per_observable: dict
    horizon: float

    def __str__(self):
        per = ", ".join(f"{k}={v:.4f}" for k, v in self.per_observable.items())
        return (f"excited population max {self.max_excited_population:.4%}; "
                f"field discrepancy max {self.max_field_discrepancy:.4%} ({per})")


def adiabatic_elimination_check(p: SystemParams, horizon: float | None = None,
                                field_dims: tuple[int, int] = (3, 3),
                                initial_fields=(("fock", 1), ("fock", 0)),
                                n_out: int = 400) -> AdiabaticityReport:
    """Compare the full single-atom model against the beam-splitter Hamiltonian.

    Both models start from the same field state (atom in its ground level);
    the report carries the maximum population outside the atomic ground
    level and the maximum discrepancy of <n1>, <n2>, <a1^dag a2> between
    the two evolutions, normalized by the largest field-observable
    magnitude seen in either run (a common scale, so tiny observables do
    not blow up the ratio).

    The default horizon is one beat period 2*pi/lam at N = 1.
    """
    if max(field_dims) > 4:
        raise ValueError("field dims above 4 are not needed for this check; refuse "
                         "to guard against accidental huge runs")
    p1 = p.with_overrides(N=1)
    lam1 = beat_coefficients(p1)["lam"]
    if horizon is None:
        if lam1 == 0.0:
            raise ValueError("lam = 0 at N=1: no beat period to span; pass horizon explicitly")
        horizon = 2.0 * math.pi / abs(lam1)

    d1, d2 = field_dims
    space3 = make_space((d1, d2, 3), labels=("field1", "field2", "atom"))
    space2 = make_space((d1, d2), labels=("field1", "field2"))
    H_full = single_atom_model(space3, p1)
    H_eff = hamiltonian_beam_splitter(space2, p1)

    full_state = product_state(space3, list(initial_fields) + [("fock", 0)])
    eff_state = product_state(space2, list(initial_fields))

    def k_pair(space):
        a1 = lowering(space, 0)
        a2 = lowering(space, 1)
        K = (a1.conj().T @ a2).tocsr()
        return (K + K.conj().T).tocsr(), (1j * (K.conj().T - K)).tocsr()

    obs3 = {"n1": number(space3, 0), "n2": number(space3, 1)}
    obs3["reK"], obs3["imK"] = k_pair(space3)
    obs3["excited"] = transition(space3, 2, 1, 1) + transition(space3, 2, 2, 2)
    obs2 = {"n1": number(space2, 0), "n2": number(space2, 1)}
    obs2["reK"], obs2["imK"] = k_pair(space2)

    out_step = horizon / n_out
    run_full = evolve_master(EvolutionSpec(
        initial=full_state, hamiltonian=H_full, t_end=horizon,
        output_step=out_step, observables=obs3, trace_tol=1e-6))
    run_eff = evolve_master(EvolutionSpec(
        initial=eff_state, hamiltonian=H_eff, t_end=horizon,
        output_step=out_step, observables=obs2, trace_tol=1e-6))

    K_full = 0.5 * (run_full["reK"] + 1j * run_full["imK"])
    K_eff = 0.5 * (run_eff["reK"] + 1j * run_eff["imK"])
    diffs = {
        "n1": np.max(np.abs(run_full["n1"] - run_eff["n1"])),
        "n2": np.max(np.abs(run_full["n2"] - run_eff["n2"])),
        "K": np.max(np.abs(K_full - K_eff)),
    }
    scale = max(
        float(np.max(np.abs(run_full["n1"]))), float(np.max(np.abs(run_eff["n1"]))),
        float(np.max(np.abs(run_full["n2"]))), float(np.max(np.abs(run_eff["n2"]))),
        float(np.max(np.abs(K_full))), float(np.max(np.abs(K_eff))), 1e-12,
    )
    per = {k: float(v) / scale for k, v in diffs.items()}
    return AdiabaticityReport(
        max_excited_population=float(np.max(run_full["excited"])),
        max_field_discrepancy=max(per.values()),
        per_observable=per,
        horizon=horizon,
    )
