import numpy as np
import pytest

from fairtopk import Population
from fairtopk.fit import OutcomeModel, fit_outcome_model, generate_population, simple_config


@pytest.fixture
def pop6():
    """Six candidates, one score, designated group {1, 2, 3}."""
    return Population.from_arrays(
        ids=[1, 2, 3, 4, 5, 6],
        scores=[[10.0], [20.0], [30.0], [40.0], [50.0], [60.0]],
        groups={"g": [True, True, True, False, False, False]},
    )


@pytest.fixture
def identity_model():
    return OutcomeModel(0.0, 1.0, (1.0,))


def random_population(seed, n=300, d=2, attrs=("g",), noise_std=0.0, prevalence=0.4):
    """Synthetic population with a fitted model; designated groups score lower."""
    rng = np.random.default_rng(10_000 + seed)
    c = rng.dirichlet(np.ones(d))
    shifts = {a: list(-rng.uniform(10, 60, d)) for a in attrs}
    cfg = simple_config(n, d=d, c=c, shifts=shifts, prevalence=prevalence, seed=seed,
                        noise_std=noise_std)
    pop = generate_population(cfg)
    return pop, fit_outcome_model(pop)
