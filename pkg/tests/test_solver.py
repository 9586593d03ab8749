import numpy as np
import pytest

from slipflow.fespace import SystemState
from slipflow.forms import AssemblyContext, NitscheConfig, assemble_residual
from slipflow.sliplaw import dynamic_moving_wall, navier, stick_slip_regularized
from slipflow.solver import (
    ConfigError,
    NewtonConfig,
    NewtonError,
    newton_solve,
    steady_solve,
    time_march,
)
from slipflow.verify import dirichlet_data, forcing, taylor_green


def stokes_ctx(space, f=None):
    return AssemblyContext(
        space,
        NitscheConfig(alpha=10.0, include_convection=False),
        navier(1.0),
        forcing=f,
        dirichlet=0.0,
    )


def test_linear_problem_one_iteration(space8):
    f = lambda x, t: np.column_stack([np.ones(len(x)), np.zeros(len(x))])
    state, report = newton_solve(stokes_ctx(space8, f))
    assert report.iterations == 1
    assert report.converged
    # converged mean pressure vanishes with the multiplier
    from slipflow.forms import get_cache

    assert abs(state.p @ get_cache(space8).e_p) <= 1e-10


def test_rest_state_zero_iterations(space8):
    state, report = newton_solve(stokes_ctx(space8), cfg=NewtonConfig(abs_tol=1e-10))
    assert report.iterations == 0
    assert np.all(state.u == 0.0)


def test_newton_max_iter_error(space4):
    # unreachable tolerance forces the divergence path and carries the iterate
    ctx = AssemblyContext(
        space4, NitscheConfig(alpha=10.0), navier(1.0),
        forcing=lambda x, t: np.column_stack([np.sin(7 * x[:, 0]), x[:, 1]]),
        dirichlet=0.0,
    )
    with pytest.raises(NewtonError) as exc:
        newton_solve(ctx, cfg=NewtonConfig(abs_tol=1e-300, rel_tol=1e-300,
                                           max_iter=2))
    assert exc.value.state is not None
    assert exc.value.report.iterations == 2


def test_newton_config_validation():
    with pytest.raises(ConfigError):
        NewtonConfig(abs_tol=0.0)
    with pytest.raises(ConfigError):
        NewtonConfig(ls_rho=1.5)


def test_steady_solve_rejects_unsteady_context(space4):
    ctx = AssemblyContext(
        space4, NitscheConfig(alpha=10.0), navier(1.0),
        dirichlet=0.0, delta=0.01, u_old=np.zeros(space4.n_vdofs),
    )
    with pytest.raises(ConfigError):
        steady_solve(ctx)


def test_steady_continuation_schedule(space8):
    sol = taylor_green(1.0)

    def make_ctx(lam):
        s = taylor_green(lam)
        return AssemblyContext(
            space8, NitscheConfig(alpha=10.0), navier(1.0),
            forcing=forcing(s, 1.0), dirichlet=dirichlet_data(s),
        )

    state = steady_solve(make_ctx, [0.5, 1.0])
    r = assemble_residual(state, make_ctx(1.0))
    assert np.linalg.norm(r) <= 1e-9
    with pytest.raises(ConfigError):
        steady_solve(make_ctx, [])


def test_time_march_flat_at_rest(space8):
    ctx = AssemblyContext(
        space8, NitscheConfig(alpha=10.0), navier(1.0),
        dirichlet=0.0, delta=0.01, u_old=np.zeros(space8.n_vdofs),
    )
    traj = time_march(ctx, SystemState.zero(space8), T=0.05, delta=0.01,
                      probes=[(0.5, 1.0)])
    assert np.all(traj.probe_series == 0.0)
    assert np.all(np.asarray(traj.newton_iters) == 0)
    assert len(traj.times) == 6
    assert np.all(traj.profiles[-1].u_tau == 0.0)


def test_time_grid_must_divide(space4):
    ctx = AssemblyContext(
        space4, NitscheConfig(alpha=10.0), navier(1.0),
        dirichlet=0.0, delta=0.005, u_old=np.zeros(space4.n_vdofs),
    )
    with pytest.raises(ConfigError):
        time_march(ctx, SystemState.zero(space4), T=0.013, delta=0.005)
    with pytest.raises(ConfigError):
        time_march(ctx, SystemState.zero(space4), T=0.05, delta=-0.01)


def test_dynamic_march_monotone_and_warm_start_equivalence(space8):
    law = dynamic_moving_wall(1.0, 0.0, 0.01)
    ctx = AssemblyContext(
        space8, NitscheConfig(alpha=10.0), law,
        dirichlet=0.0, delta=0.005, u_old=np.zeros(space8.n_vdofs),
    )
    traj = time_march(ctx, SystemState.zero(space8), T=0.05, delta=0.005,
                      probes=[(0.5, 1.0)])
    series = traj.probe_series[:, 0]
    assert np.all(np.diff(series) >= -1e-6)

    # re-solve the final step from a cold start: after the march ctx.u_old
    # still holds the state at t_{m-1}
    m = len(traj.times) - 1
    ctx2 = AssemblyContext(
        space8, NitscheConfig(alpha=10.0), law,
        dirichlet=0.0, delta=0.005, u_old=ctx.u_old, t=traj.times[m],
    )
    cold, _ = newton_solve(ctx2, guess=None)
    assert np.abs(cold.u - traj.final_state.u).max() <= 1e-7


def test_march_with_stick_slip_energy_recorded(space4):
    # force-driven flow with homogeneous no-slip walls: the per-step energy
    # identity must close to solver tolerance
    sol = taylor_green(1.0)
    law = stick_slip_regularized(0.0, 1.0, 2e-4)
    ctx = AssemblyContext(
        space4, NitscheConfig(alpha=10.0), law,
        forcing=forcing(sol, 1.0), dirichlet=0.0,
        delta=0.01, u_old=np.zeros(space4.n_vdofs),
    )
    traj = time_march(ctx, SystemState.zero(space4), T=0.05, delta=0.01)
    assert len(traj.energy) == 5
    for eb in traj.energy:
        assert abs(eb.residual) <= 1e-7 * eb.scale
