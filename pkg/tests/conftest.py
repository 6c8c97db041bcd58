import pytest

from sixgen.harness import Cluster


@pytest.fixture
def cluster4():
    cluster = Cluster(size=4, seed=7).start()
    yield cluster
    cluster.stop()


@pytest.fixture
def cluster2():
    cluster = Cluster(size=2, seed=7).start()
    yield cluster
    cluster.stop()
