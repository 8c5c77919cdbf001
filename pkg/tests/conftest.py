import numpy as np
import pytest
from hypothesis import settings

from srwe.game import ActionSpace, AffinePriceCost, AggregateSpace, GameInstance, PlayerClass
from srwe.scenarios import EvChargingConfig, build_ev_charging

settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def paper_game():
    return build_ev_charging(EvChargingConfig())


@pytest.fixture
def unit_cost():
    # n = 1, alpha = 1, beta = 0: the hand-worked instance used throughout.
    return AffinePriceCost(alpha=[1.0], beta=[0.0])


@pytest.fixture
def unit_support():
    return AggregateSpace(sigma_max=1.0, dim=1)


def single_class_game(upper, budget, alpha, beta, count=1, sigma_max=None, base_demand=None):
    upper = np.asarray(upper, dtype=float)
    cost = AffinePriceCost(alpha=alpha, beta=beta, base_demand=base_demand)
    smax = float(upper.max()) if sigma_max is None else sigma_max
    return GameInstance(classes=(PlayerClass(ActionSpace(upper, budget), cost, count),),
                        support=AggregateSpace(smax, upper.size))
