"""Newton iteration with backtracking line search, sparse direct linear
solves, steady solves with load continuation, and backward Euler time
marching with trajectory capture.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse.linalg as spla

from .fespace import SystemState
from .forms import (
    AssemblyContext,
    WallProfile,
    assemble_jacobian,
    assemble_residual,
    boundary_functionals,
    energy_balance,
)

log = logging.getLogger("slipflow.solver")


class SolverError(Exception):
    """Linear or nonlinear solver failure."""


class ConfigError(Exception):
    """Inconsistent run configuration (bad time grid, schedule, ...)."""


class NewtonError(SolverError):
    """Newton divergence; carries the last iterate for continuation."""

    def __init__(self, message, state=None, report=None):
        super().__init__(message)
        self.state = state
        self.report = report


@dataclasses.dataclass
class NewtonConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_iter: int = 25
    ls_rho: float = 0.5
    ls_max: int = 8
    # accept a step computed with a reused factorization only if it
    # contracts the residual at least this much; otherwise refactorize
    chord_accept: float = 0.25

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ConfigError("Newton tolerances must be > 0")
        if not 0.0 < self.ls_rho < 1.0:
            raise ConfigError("line-search factor must lie in (0, 1)")


class FactorCache:
    """Holds the last LU factorization for reuse across time steps.

    Reused factors only ever produce candidate updates; acceptance is
    always judged on the true nonlinear residual, so reuse affects cost,
    never the converged solution.
    """

    def __init__(self):
        self.lu = None


@dataclasses.dataclass
class NewtonReport:
    iterations: int
    residuals: list
    ls_steps: list
    converged: bool


def _factorize(state, ctx):
    J = assemble_jacobian(state, ctx)
    try:
        return spla.splu(J.tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"sparse LU factorization failed: {exc}") from exc


def newton_solve(
    ctx: AssemblyContext,
    guess: Optional[SystemState] = None,
    cfg: NewtonConfig = NewtonConfig(),
    step_label: int = 0,
    factors: Optional[FactorCache] = None,
) -> tuple[SystemState, NewtonReport]:
    """Solve the assembled nonlinear system.

    Converged when ||R|| <= max(abs_tol, rel_tol ||R_0||).  The guess has
    its Dirichlet entries projected before the first residual, so every
    Newton update vanishes on the constrained DOFs.  When a FactorCache is
    passed (the time marcher does), updates are first tried with the
    cached factorization and the Jacobian is refactorized at the current
    iterate whenever that fails to contract the true residual.
    """
    state = guess.copy() if guess is not None else SystemState.zero(ctx.space)
    ctx.project_dirichlet(state)
    if factors is None:
        factors = FactorCache()   # reuse within this solve only

    r = assemble_residual(state, ctx)
    rnorm = float(np.linalg.norm(r))
    residuals = [rnorm]
    ls_steps = []
    tol = max(cfg.abs_tol, cfg.rel_tol * rnorm)
    log.info("step %d iter 0 resid %.6e ls 0", step_label, rnorm)

    it = 0
    while rnorm > tol:
        if it >= cfg.max_iter:
            raise NewtonError(
                f"Newton did not converge in {cfg.max_iter} iterations "
                f"(residual {rnorm:.3e}, tol {tol:.3e})",
                state=state,
                report=NewtonReport(it, residuals, ls_steps, False),
            )

        # quasi-Newton attempt with the cached factorization
        if factors.lu is not None:
            cand = ctx.unpack(ctx.pack(state) + factors.lu.solve(-r))
            rc = assemble_residual(cand, ctx)
            rcn = float(np.linalg.norm(rc))
            if rcn <= cfg.chord_accept * rnorm or rcn <= tol:
                state, rnorm, r = cand, rcn, rc
                ls_steps.append(0)
                residuals.append(rnorm)
                it += 1
                log.info("step %d iter %d resid %.6e ls 0 (reused)",
                         step_label, it, rnorm)
                continue

        lu = _factorize(state, ctx)
        factors.lu = lu
        d = lu.solve(-r)

        x = ctx.pack(state)
        lam = 1.0
        best = None
        for halving in range(cfg.ls_max + 1):
            cand = ctx.unpack(x + lam * d)
            rc = assemble_residual(cand, ctx)
            rcn = float(np.linalg.norm(rc))
            if best is None or rcn < best[1]:
                best = (cand, rcn, rc, halving)
            if rcn < rnorm:
                break
            lam *= cfg.ls_rho
        state, rnorm, r, used = best
        ls_steps.append(used)
        residuals.append(rnorm)
        it += 1
        log.info("step %d iter %d resid %.6e ls %d", step_label, it, rnorm, used)

    return state, NewtonReport(it, residuals, ls_steps, True)


def steady_solve(
    problem: Union[AssemblyContext, Callable[[float], AssemblyContext]],
    schedule: Optional[Sequence[float]] = None,
    cfg: NewtonConfig = NewtonConfig(),
) -> SystemState:
    """Steady solve, optionally ramping a load parameter.

    `problem` is either a ready AssemblyContext (solved directly) or a
    factory load -> AssemblyContext walked along `schedule` with warm
    starts.  Newton failures propagate carrying the failing load value.
    """
    if callable(problem) and not isinstance(problem, AssemblyContext):
        if not schedule:
            raise ConfigError("continuation solve needs a non-empty schedule")
        state = None
        for lam in schedule:
            ctx = problem(lam)
            if ctx.delta is not None:
                raise ConfigError("steady_solve needs steady contexts (delta=None)")
            try:
                state, _ = newton_solve(ctx, guess=state, cfg=cfg)
            except NewtonError as exc:
                raise NewtonError(
                    f"continuation failed at load {lam}: {exc}",
                    state=exc.state,
                    report=exc.report,
                ) from exc
        return state
    if problem.delta is not None:
        raise ConfigError("steady_solve needs a steady context (delta=None)")
    state, _ = newton_solve(problem, cfg=cfg)
    return state


@dataclasses.dataclass
class Probe:
    point: np.ndarray
    cell: int
    normal: np.ndarray


@dataclasses.dataclass
class Trajectory:
    """Backward Euler run record on the uniform grid t_j = j delta."""

    times: np.ndarray                 # (m+1,)
    probe_points: list                # list of (x, y)
    probe_series: np.ndarray          # (m+1, n_probes) of |u_tau|
    profiles: list                    # WallProfile per grid point (incl. t=0)
    energy: list                      # EnergyBalance per step (length m)
    newton_iters: list                # iterations per step (length m)
    final_state: SystemState

    def profile_at(self, t: float) -> WallProfile:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigError(f"time {t} is not on the trajectory grid")
        return self.profiles[j]


def _setup_probes(ctx: AssemblyContext, points) -> list:
    space = ctx.space
    probes = []
    for pt in points:
        pt = np.asarray(pt, dtype=float)
        cell = space.locate_cell(pt)
        sl = space.slip_facets
        if sl.size:
            mids = space.mesh.facet_midpoints()[sl]
            f = sl[int(np.argmin(np.linalg.norm(mids - pt[None, :], axis=1)))]
            normal = space.mesh.facet_normals[f]
        else:
            normal = np.array([0.0, 1.0])
        probes.append(Probe(pt, cell, normal))
    return probes


def _probe_values(ctx: AssemblyContext, state: SystemState, probes) -> np.ndarray:
    space = ctx.space
    out = np.empty(len(probes))
    p0 = space.mesh.vertices[space.mesh.cells[:, 0]]
    for k, pr in enumerate(probes):
        xi = space.invJ[pr.cell] @ (pr.point - p0[pr.cell])
        v, _, _ = space.evaluate_velocity(state.u, pr.cell, xi)
        vt = v - (v @ pr.normal) * pr.normal
        out[k] = np.linalg.norm(vt)
    return out


def time_march(
    ctx: AssemblyContext,
    u0: SystemState,
    T: float,
    delta: float,
    probes: Sequence = (),
    cfg: NewtonConfig = NewtonConfig(),
    record_profiles: bool = True,
) -> Trajectory:
    """March the backward Euler scheme from u0 to time T.

    T must be an integer multiple of delta (rejected otherwise rather than
    silently truncated).  Each step warm-starts Newton from the previous
    state; failures abort with the step index.
    """
    if delta <= 0:
        raise ConfigError(f"time step delta must be > 0, got {delta}")
    m_real = T / delta
    m = int(round(m_real))
    if m < 1 or abs(m * delta - T) > 1e-9 * max(T, 1.0):
        raise ConfigError(
            f"final time {T} is not an integer multiple of delta {delta}"
        )

    probe_objs = _setup_probes(ctx, probes)
    factors = FactorCache()
    state = u0.copy()
    ctx.set_timestep(delta)
    ctx.advance(0.0, state.u.copy())
    ctx.project_dirichlet(state)

    times = delta * np.arange(m + 1)
    series = np.zeros((m + 1, len(probe_objs)))
    profiles = []
    energies = []
    iters = []
    if probe_objs:
        series[0] = _probe_values(ctx, state, probe_objs)
    if record_profiles:
        profiles.append(boundary_functionals(state, ctx, t=0.0))

    for j in range(1, m + 1):
        t = j * delta
        ctx.advance(t, state.u.copy())
        try:
            state, report = newton_solve(
                ctx, guess=state, cfg=cfg, step_label=j, factors=factors
            )
        except NewtonError as exc:
            raise NewtonError(
                f"time step {j} (t = {t:.6g}) failed: {exc}",
                state=exc.state,
                report=exc.report,
            ) from exc
        iters.append(report.iterations)
        energies.append(energy_balance(state, ctx))
        if probe_objs:
            series[j] = _probe_values(ctx, state, probe_objs)
        if record_profiles:
            profiles.append(boundary_functionals(state, ctx))

    return Trajectory(
        times=times,
        probe_points=[tuple(map(float, p)) for p in probes],
        probe_series=series,
        profiles=profiles,
        energy=energies,
        newton_iters=iters,
        final_state=state,
    )
