import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from surfflow.mesh import generate_mesh  # noqa: E402

ACCEPTANCE = {}


def record_acceptance(number, passed, detail=""):
    ACCEPTANCE[number] = ("PASS" if passed else "FAIL", detail)


def record_skipped(number, reason):
    ACCEPTANCE.setdefault(number, ("NOT RUN", reason))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {status} {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_meshes():
    return {
        "disk": generate_mesh("disk", radius=1.0, n_rings=3),
        "annulus": generate_mesh("annulus", inner_radius=0.4, outer_radius=1.0, n_radial=3, n_angular=16),
        "torus": generate_mesh("torus", n_theta=12, n_phi=8),
        "cylinder": generate_mesh("cylinder_lateral", n_angular=16, n_axial=4),
    }


@pytest.fixture(scope="session")
def tiny_meshes():
    """Meshes with at most 50 triangles for dense-oracle comparisons."""
    return {
        "disk": generate_mesh("disk", radius=1.0, n_rings=2),
        "annulus": generate_mesh("annulus", inner_radius=0.4, outer_radius=1.0, n_radial=2, n_angular=10),
        "torus": generate_mesh("torus", n_theta=6, n_phi=4),
    }
