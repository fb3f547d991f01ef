import numpy as np
import pytest

from bvhilbert.calculus import SpectralSpace
from bvhilbert.measures import GaussianMeasure, ProductMeasure, WeightedGaussianMeasure
from bvhilbert.potentials import ScalarNonlinearity, quadratic_potential, reaction_diffusion_potential


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def measure_zoo():
    """One small instance of every measure family, keyed by name."""
    space = SpectralSpace([1.0, 0.5, 0.25, 0.125])
    gauss = GaussianMeasure(space)
    sine = SpectralSpace.from_rule("dirichlet_half_inverse", 6, basis="sine")
    rd = reaction_diffusion_potential(ScalarNonlinearity([0, 0, 0, 1]), sine, 128)
    return {
        "gaussian": gauss,
        "weighted_quadratic": WeightedGaussianMeasure(gauss, quadratic_potential(4, 0.7)),
        "weighted_rd": WeightedGaussianMeasure(GaussianMeasure(sine), rd),
        "product_m1": ProductMeasure(1.0, [1.0, 0.5, 0.2]),
        "product_m2": ProductMeasure(2.0, [1.0, 0.3, 0.1]),
    }
