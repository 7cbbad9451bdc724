"""Shared fixtures: the reference field model and detector matrices.

Session-scoped because the composed 4D table and the detection matrices
are pure functions of shipped constants and are reused across test files.
"""
import numpy as np
import pytest

from tripletwb.detector import PAPER_TABLE_1, detection_matrix, forward_counts
from tripletwb.gaussian import PAPER_TABLE_2, GaussianFieldModel

# the idler dark components have heavy Mandel-Rice tails; the default box
# (32 signal / 20 idler) keeps their discarded mass below 1e-3, not 1e-8
MODEL_TAIL_TOL = 1e-3


@pytest.fixture(scope="session")
def model4():
    """Composed 4D photon-number table of the shipped fitted parameters."""
    return GaussianFieldModel(PAPER_TABLE_2, tail_tol=MODEL_TAIL_TOL).distribution()


@pytest.fixture(scope="session")
def matrices():
    """Detection matrices for the shipped detector preset (n <= 32 / 20)."""
    return {l: detection_matrix(cfg, 32 if l == "s" else 20)
            for l, cfg in PAPER_TABLE_1.items()}


@pytest.fixture(scope="session")
def f_model(model4, matrices):
    """Exact photocount table: the model mapped through the detectors."""
    return forward_counts(model4, matrices)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
