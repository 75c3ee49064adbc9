"""Shared fixtures: small architectures, toy recordings, finite differences."""

import numpy as np
import pytest

from motenc.model import ArchitectureSpec
from motenc.motion_io import MotionRecording
from motenc.skeleton import HierarchySpec, SkeletonSchema
from motenc.tensor import SeededRng

SMALL_NODE_WIDTHS = (2, 3, 4, 8)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def numeric_gradient(loss, array, h=1e-5):
    """Central differences of ``loss()`` w.r.t. every entry of ``array`` (perturbed in place)."""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        index = it.multi_index
        original = array[index]
        array[index] = original + h
        plus = loss()
        array[index] = original - h
        minus = loss()
        array[index] = original
        grad[index] = (plus - minus) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


@pytest.fixture
def rng():
    return SeededRng(0)


@pytest.fixture
def make_spec():
    """Factory for small encoder specs on the 24-joint skeleton."""

    def factory(kind="S-TE", delta_t=4, **overrides):
        values = dict(
            kind=kind,
            delta_t=delta_t,
            num_joints=24,
            outer_width=8,
            bottleneck_width=4,
            conv_specs=((2, 2), (2, delta_t)),
            hierarchy=HierarchySpec(node_widths=SMALL_NODE_WIDTHS),
            init_std=0.1,
            nonzeros_per_unit=5,
        )
        values.update(overrides)
        return ArchitectureSpec(**values)

    return factory


@pytest.fixture
def make_recording():
    """Factory for random 24-joint recordings."""

    def factory(num_frames=30, fps=60, label="walk", subject="s01", trial="000", seed=0, schema=None):
        schema = schema or SkeletonSchema()
        frames = np.random.default_rng(seed).normal(0.0, 0.1, (num_frames, 3, schema.num_joints))
        return MotionRecording(frames, fps, schema, label, subject, trial)

    return factory
