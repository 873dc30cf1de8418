"""
Shared fixtures: seeded generators, small scenes and hand-built profiles
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.camera import Ray
from models.restriction import RayRestriction, TransmittanceProfile
from services.service_factory import ServiceFactory
from utils.synthetic_scenes import random_quaternions, single_gaussian_scene


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the optimization runs marked slow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def fresh_services():
    ServiceFactory.reset()
    yield
    ServiceFactory.reset()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def axis_ray():
    """Ray from z = -5 along +z, through the origin at t = 5"""
    return Ray((0.0, 0.0, -5.0), (0.0, 0.0, 1.0))


@pytest.fixture
def opaque_scene():
    """Isotropic unit Gaussian at the origin with opacity 0.8"""
    return single_gaussian_scene(opacity=0.8, scale=1.0)


@pytest.fixture
def make_profile(rng):
    """Factory for profiles of random restrictions along one ray"""

    def build(count, t_range=(2.0, 8.0), a_range=(0.5, 4.0), g_range=(0.05, 0.9)):
        restrictions = [
            RayRestriction(i, rng.uniform(*a_range), rng.uniform(*t_range), rng.uniform(*g_range))
            for i in range(count)
        ]
        colors = rng.uniform(0.0, 1.0, size=(count, 3))
        normals = random_quaternions(rng, count)[:, 1:]
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        return TransmittanceProfile(restrictions, colors, normals)

    return build


def restriction_profile(*entries, colors=None, normals=None):
    """Profile from (a, t_star, g_peak) triples, ids in argument order"""
    restrictions = [RayRestriction(i, a, t, g) for i, (a, t, g) in enumerate(entries)]
    return TransmittanceProfile(restrictions, colors, normals)


@pytest.fixture
def profile_of():
    return restriction_profile
