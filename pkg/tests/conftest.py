import pytest

from diffdata import datasets, diffscan


@pytest.fixture(scope="session")
def small_city():
    return datasets.generate_clustered_city(n_users=60, n_locations=300, seed=11)


@pytest.fixture(scope="session")
def small_city_split(small_city):
    return datasets.holdout_split(small_city, 0.2, seed=11)


@pytest.fixture
def topn_cfg():
    return diffscan.RecommenderConfig(kind="topn", top_n=5)


@pytest.fixture
def precision_cfg():
    return diffscan.MetricConfig(name="precision")
