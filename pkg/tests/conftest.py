import numpy as np
import pytest

from slipflow import mesh as mesh_mod
from slipflow.fespace import TaylorHoodSpace


@pytest.fixture(scope="session")
def square4():
    return mesh_mod.tag_boundary(
        mesh_mod.build_unit_square(4), mesh_mod.top_wall_tagger()
    )


@pytest.fixture(scope="session")
def space4(square4):
    return TaylorHoodSpace(square4)


@pytest.fixture(scope="session")
def square8():
    return mesh_mod.tag_boundary(
        mesh_mod.build_unit_square(8), mesh_mod.top_wall_tagger()
    )


@pytest.fixture(scope="session")
def space8(square8):
    return TaylorHoodSpace(square8)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
