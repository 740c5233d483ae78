import itertools
import numpy as np
import pytest
from apcd import GraphTopology, VariablePartition, PairwiseModel, all_configurations, exact_distribution

def pytest_configure(config):
	config.addinivalue_line("markers", "slow: long-running convergence experiments")


def random_topology(rng:np.random.Generator, num_nodes:int, edge_probability:float=0.5) -> GraphTopology:
	pairs = [pair for pair in itertools.combinations(range(num_nodes), 2) if rng.random() < edge_probability]
	return GraphTopology(num_nodes, pairs)

def random_model(rng:np.random.Generator, num_nodes:int, edge_probability:float=0.5, scale:float=1.0) -> PairwiseModel:
	topology = random_topology(rng, num_nodes, edge_probability)
	return PairwiseModel(topology, rng.normal(0, scale, topology.num_nodes), rng.normal(0, scale, topology.num_edges))

def random_partition(rng:np.random.Generator, num_nodes:int) -> VariablePartition:
	return VariablePartition(num_nodes, np.flatnonzero(rng.random(num_nodes) < 0.5).tolist())

def exact_samples(rng:np.random.Generator, model:PairwiseModel, count:int) -> np.ndarray:
	"""Independent draws from p_theta by enumeration"""
	states = all_configurations(model.num_nodes)
	return states[rng.choice(len(states), size=count, p=exact_distribution(model))]


@pytest.fixture
def rng():
	return np.random.default_rng(20240611)

@pytest.fixture
def square():
	"""4-cycle 0-1-3-2-0 (a 2x2 grid) with nodes 1 and 2 hidden"""
	topology = GraphTopology(4, [(0, 1), (2, 3), (0, 2), (1, 3)])
	model = PairwiseModel(topology, [0.5, -0.3, 0.2, -0.6], [0.8, -0.4, 0.6, 0.3])
	return model, VariablePartition(4, [1, 2])

@pytest.fixture
def square_data(square):
	model, _ = square
	return exact_samples(np.random.default_rng(7), model, 12)
