import math

import numpy as np
import pytest

from slipflow.fespace import (
    SystemState,
    TaylorHoodSpace,
    interval_quadrature,
    p2_basis,
    triangle_quadrature,
)
from slipflow.mesh import build_unit_square, tag_boundary, top_wall_tagger
from slipflow.verify import taylor_green


def test_cell_quadrature_degree6_exact():
    qp, qw = triangle_quadrature(6)
    assert np.all(qw > 0)
    assert abs(qw.sum() - 0.5) <= 1e-14
    for a in range(7):
        for b in range(7 - a):
            approx = np.sum(qw * qp[:, 0] ** a * qp[:, 1] ** b)
            exact = (
                math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            )
            assert abs(approx - exact) <= 1e-14


def test_facet_quadrature_degree6_exact():
    fq, fw = interval_quadrature(6)
    assert np.all(fw > 0)
    for k in range(7):
        assert abs(np.sum(fw * fq**k) - 1.0 / (k + 1)) <= 1e-14


def test_p2_lagrange_property():
    nodes = np.array(
        [[0, 0], [1, 0], [0, 1], [0.5, 0.5], [0, 0.5], [0.5, 0]], dtype=float
    )
    val, _ = p2_basis(nodes)
    assert np.abs(val - np.eye(6)).max() <= 1e-14


def test_partition_of_unity(space4):
    assert np.abs(space4.phi.sum(axis=0) - 1.0).max() <= 1e-14
    assert np.abs(space4.psi.sum(axis=0) - 1.0).max() <= 1e-14


def test_evaluate_linear_field_gives_identity_D(space4):
    u = space4.interpolate_velocity(lambda x: x)
    _, _, D = space4.evaluate_velocity(u, 3, [0.3, 0.2])
    assert np.abs(D - np.eye(2)).max() <= 1e-13


def test_evaluate_rigid_rotation_gives_zero_D(space4):
    u = space4.interpolate_velocity(
        lambda x: np.column_stack([x[:, 1], -x[:, 0]])
    )
    _, _, D = space4.evaluate_velocity(u, 5, [0.1, 0.6])
    assert np.abs(D).max() <= 1e-13


def test_evaluate_quadratic_field(space4):
    u = space4.interpolate_velocity(
        lambda x: np.column_stack([x[:, 0] ** 2, 0.0 * x[:, 0]])
    )
    cell, ref = 7, np.array([0.25, 0.5])
    _, grad, D = space4.evaluate_velocity(u, cell, ref)
    p0 = space4.mesh.vertices[space4.mesh.cells[cell, 0]]
    J = np.stack(
        [
            space4.mesh.vertices[space4.mesh.cells[cell, 1]] - p0,
            space4.mesh.vertices[space4.mesh.cells[cell, 2]] - p0,
        ],
        axis=1,
    )
    x = p0 + J @ ref
    assert abs(D[0, 0] - 2.0 * x[0]) <= 1e-13
    assert abs(grad[0, 0] - 2.0 * x[0]) <= 1e-13


def test_trace_split_top_wall(space4):
    top = [
        f
        for f in range(space4.mesh.num_facets)
        if space4.mesh.facet_tags[f] == 1
    ][0]
    u = space4.interpolate_velocity(lambda x: np.tile([3.0, 4.0], (len(x), 1)))
    vn, vt = space4.trace_split(u, top, 0.3)
    assert abs(vn - 4.0) <= 1e-13
    assert np.allclose(vt, [3.0, 0.0])
    assert abs(vt @ space4.mesh.facet_normals[top]) <= 1e-14


def test_trace_split_left_wall(space4):
    left = [
        f
        for f in range(space4.mesh.num_facets)
        if abs(space4.mesh.facet_midpoints()[f][0]) <= 1e-12
    ][0]
    u = space4.interpolate_velocity(lambda x: np.tile([1.0, 1.0], (len(x), 1)))
    vn, vt = space4.trace_split(u, left, 0.5)
    assert abs(vn - (-1.0)) <= 1e-13
    assert np.allclose(vt, [0.0, 1.0])


def test_trace_split_zero(space4):
    vn, vt = space4.trace_split(np.zeros(space4.n_vdofs), 0, 0.25)
    assert vn == 0.0 and np.all(vt == 0.0)


def test_trace_reconstruction(space4, rng):
    u = rng.normal(size=space4.n_vdofs)
    f = int(space4.slip_facets[0])
    n = space4.mesh.facet_normals[f]
    vn, vt = space4.trace_split(u, f, 0.37)
    vals, _ = space4.facet_trace(u, f, np.array([0.37]))
    assert np.allclose(vn * n + vt, vals[0], atol=1e-14)


def test_interpolate_linear_exact(space4, rng):
    u = space4.interpolate_velocity(lambda x: x)
    for _ in range(5):
        cell = rng.integers(space4.mesh.num_cells)
        ref = rng.dirichlet([1, 1, 1])[:2]
        val, _, _ = space4.evaluate_velocity(u, int(cell), ref)
        p0 = space4.mesh.vertices[space4.mesh.cells[cell, 0]]
        J = np.stack(
            [
                space4.mesh.vertices[space4.mesh.cells[cell, 1]] - p0,
                space4.mesh.vertices[space4.mesh.cells[cell, 2]] - p0,
            ],
            axis=1,
        )
        assert np.allclose(val, p0 + J @ ref, atol=1e-14)


def test_interpolate_taylor_green_center_node():
    msh = tag_boundary(build_unit_square(4), top_wall_tagger())
    sp = TaylorHoodSpace(msh)
    sol = taylor_green(1.0)
    u = sp.interpolate_velocity(sol.u, 0.0)
    i = np.flatnonzero(
        (np.abs(sp.vnode_coords[:, 0] - 0.5) < 1e-14)
        & (np.abs(sp.vnode_coords[:, 1] - 0.5) < 1e-14)
    )[0]
    assert abs(u[2 * i]) <= 1e-15 and abs(u[2 * i + 1]) <= 1e-15


def test_interpolate_zero(space4):
    u = space4.interpolate_velocity(lambda x: np.zeros_like(x))
    assert np.all(u == 0.0)


def test_interpolation_is_projection(space4, rng):
    u0 = rng.normal(size=space4.n_vdofs)
    p0v = space4.mesh.vertices[space4.mesh.cells[:, 0]]

    def field(x):
        out = np.empty((len(x), 2))
        for k, xx in enumerate(x):
            c = space4.locate_cell(xx)
            xi = space4.invJ[c] @ (xx - p0v[c])
            out[k] = space4.evaluate_velocity(u0, c, xi)[0]
        return out

    assert np.abs(space4.interpolate_velocity(field) - u0).max() <= 1e-12


def test_dirichlet_dofs_unique_and_cover_corners(space4):
    dd = space4.dirichlet_vdofs
    assert len(np.unique(dd)) == len(dd)
    # the wall corners (0,1), (1,1) belong to Dirichlet (strong zero wins)
    for corner in ([0.0, 1.0], [1.0, 1.0]):
        node = np.flatnonzero(
            np.all(np.abs(space4.vnode_coords - corner) < 1e-14, axis=1)
        )[0]
        assert 2 * node in dd and 2 * node + 1 in dd


def test_error_norms_reproduces_discrete_pair(space8):
    # comparing a discrete pair against its own point-evaluation closures
    # must give zero error in every norm
    sol = taylor_green(1.0)
    st = SystemState(
        space8.interpolate_velocity(sol.u, 0.0),
        space8.interpolate_pressure(sol.p, 0.0),
        0.0,
    )
    en = space8.error_norms(
        st,
        lambda x, t: _discrete_velocity(space8, st.u, x),
        lambda x, t: _discrete_pressure(space8, st.p, x),
    )
    assert en.l2_u <= 1e-12
    assert en.l2_p <= 1e-12
    assert en.l2_tau <= 1e-12


def _discrete_velocity(space, u, x):
    p0v = space.mesh.vertices[space.mesh.cells[:, 0]]
    out = np.empty((len(x), 2))
    for k, xx in enumerate(x):
        c = space.locate_cell(xx)
        xi = space.invJ[c] @ (xx - p0v[c])
        out[k] = space.evaluate_velocity(u, c, xi)[0]
    return out


def _discrete_pressure(space, p, x):
    p0v = space.mesh.vertices[space.mesh.cells[:, 0]]
    out = np.empty(len(x))
    for k, xx in enumerate(x):
        c = space.locate_cell(xx)
        xi = space.invJ[c] @ (xx - p0v[c])
        out[k] = space.evaluate_pressure(p, c, xi)
    return out


def test_error_norms_zero_state_is_exact_norm(space8):
    # independent oracle: ||u_TG||_L2 = amplitude / sqrt(2) by direct
    # quadrature of sin^2 cos^2 + cos^2 sin^2 (two terms of 1/4 each)
    sol = taylor_green(1.0)
    st = SystemState.zero(space8)
    en = space8.error_norms(st, sol.u, sol.p, exact_grad_u=sol.grad_u)
    assert abs(en.l2_u - 1.0 / math.sqrt(2.0)) <= 1e-4


def test_locate_cell_outside():
    msh = tag_boundary(build_unit_square(2), top_wall_tagger())
    sp = TaylorHoodSpace(msh)
    with pytest.raises(ValueError):
        sp.locate_cell([2.0, 2.0])
