import math

import numpy as np
import pytest

from porousflow.assembly import make_context
from porousflow.mesh import generate_rect_mesh
from porousflow.porous import PhysicalParams, builtin_porosity


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def unit_mesh():
    return generate_rect_mesh((0.0, 1.0), (0.0, 1.0), 4)


@pytest.fixture(scope="session")
def pi_mesh():
    return generate_rect_mesh((0.0, math.pi), (0.0, math.pi), 8)


@pytest.fixture(scope="session")
def unit_ctx(unit_mesh, params):
    return make_context(unit_mesh, builtin_porosity("constant", value=1.0),
                        params)


@pytest.fixture(scope="session")
def mms_case():
    from porousflow.verification import build_mms_case
    return build_mms_case()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
