"""Shared fixtures: reference instances, dataset builders, report plumbing."""

import copy
import struct
import time

import numpy as np
import pytest

from rydnet.cli import DEFAULTS, run_pipeline
from rydnet.data import EncodedDataset
from rydnet.grid import build_grid
from rydnet.pulse import PulseTiming
from rydnet.training import init_params

# Lines like "A3 PASS: ..." appended by the acceptance tests; echoed after the
# run so every criterion's verdict is visible even with output capture on.
ACCEPTANCE_REPORT: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_REPORT:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_report():
    return ACCEPTANCE_REPORT


# -- reference instances -----------------------------------------------------

@pytest.fixture(scope="session")
def reference_params():
    """N=4 square at 12 um, M=3, mildly jittered away from the all-ones init.

    Couplings sit strictly inside (0, 1) so finite differences never probe
    across the clamp boundary.
    """
    grid = build_grid("square", 4, 12.0)
    timing = PulseTiming(n_intervals=3)
    params = init_params(grid, timing)
    rng = np.random.default_rng(20240801)
    vec = params.flatten() + 0.05 * rng.standard_normal(params.trainable_count)
    vec[-2:] = [0.45, 0.7]
    return params.with_flat(vec)


@pytest.fixture(scope="session")
def reference_dataset():
    return EncodedDataset(
        pulse=np.array([[4.0, 3.0, -4.0]]),
        couplings=np.array([[0.35, 0.75]]),
        labels=np.array([1]),
    )


@pytest.fixture(scope="session")
def tiny_params():
    """N=2 chain, M=1: the smallest trainable model."""
    grid = build_grid("chain", 2, 12.0)
    params = init_params(grid, PulseTiming(n_intervals=1))
    rng = np.random.default_rng(7)
    vec = params.flatten() + 0.05 * rng.standard_normal(params.trainable_count)
    vec[-1] = 0.6
    return params.with_flat(vec)


@pytest.fixture(scope="session")
def tiny_dataset():
    return EncodedDataset(
        pulse=np.array([[4.0, 3.0, -4.0], [2.5, 1.0, -2.0]]),
        couplings=np.array([[0.35], [0.75]]),
        labels=np.array([1, 0]),
    )


# -- end-to-end training runs (expensive, shared across acceptance tests) ------

@pytest.fixture(scope="session")
def blobs_config():
    cfg = copy.deepcopy(DEFAULTS)
    cfg["seed"] = 0
    cfg["dataset"].update({
        "kind": "synthetic", "samples": 250, "features": 5,
        "separation": 8.0, "sigma": 1.0, "split_fraction": 0.8,
    })
    return cfg


@pytest.fixture(scope="session")
def blobs_square_run(blobs_config):
    """Full 75-iteration pipeline on 200/50 blobs; several criteria share it."""
    t0 = time.perf_counter()
    result = run_pipeline(copy.deepcopy(blobs_config))
    result["wall_s"] = time.perf_counter() - t0
    return result


# -- IDX fixture files ----------------------------------------------------------

def write_idx(path, array, dtype_code=0x08):
    """Minimal big-endian IDX writer for test fixtures."""
    array = np.asarray(array)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">HBB", 0, dtype_code, array.ndim))
        for dim in array.shape:
            fh.write(struct.pack(">I", dim))
        fh.write(array.astype(">u1").tobytes())


@pytest.fixture()
def idx_pair(tmp_path):
    """30 tiny labeled images covering digit classes 0-2."""
    rng = np.random.default_rng(5)
    images = rng.integers(0, 256, size=(30, 4, 4))
    labels = np.repeat([0, 1, 2], 10)
    img_path, lab_path = tmp_path / "imgs.idx", tmp_path / "labs.idx"
    write_idx(img_path, images, 0x08)
    write_idx(lab_path, labels, 0x08)
    return img_path, lab_path, images, labels
