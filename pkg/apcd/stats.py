import typing
import numpy as np
from .errors import InvalidInputError
from .topology import GraphTopology, as_configuration

__all__ = ["StatsVector", "suff_stats", "suff_stats_batch", "average_stats"]

class StatsVector:
	"""A point in R^(|V|+|E|): node entries first, then edge entries in edge-list order

	Used for sufficient statistics, mean parameters and empirical means alike.
	"""

	def __init__(self, num_nodes:int, values:typing.Sequence[float]):

		values = np.array(values, dtype=np.float64)
		if values.ndim != 1 or values.shape[0] < num_nodes:
			raise InvalidInputError(f"Statistics of shape {values.shape} cannot hold {num_nodes} nodes")
		self._num_nodes = int(num_nodes)
		self._values = values
		self._values.flags.writeable = False

	@classmethod
	def from_parts(cls, node_part:typing.Sequence[float], edge_part:typing.Sequence[float]) -> "StatsVector":
		node_part = np.asarray(node_part, dtype=np.float64).ravel()
		edge_part = np.asarray(edge_part, dtype=np.float64).ravel()
		return cls(len(node_part), np.concatenate([node_part, edge_part]))

	@property
	def values(self) -> np.ndarray:
		"""The flat (read-only) vector"""
		return self._values

	@property
	def node_part(self) -> np.ndarray:
		return self._values[:self._num_nodes]

	@property
	def edge_part(self) -> np.ndarray:
		return self._values[self._num_nodes:]

	@property
	def num_nodes(self) -> int:
		return self._num_nodes

	def __len__(self) -> int:
		return len(self._values)

	def is_mean(self, topology:GraphTopology, tol:float=1e-12) -> bool:
		"""Whether this vector satisfies the bounds every average of sufficient statistics obeys"""

		if len(self) != topology.dimension:
			return False
		if (self._values < -tol).any() or (self._values > 1 + tol).any():
			return False
		if not topology.num_edges:
			return True
		ends = topology.edge_array
		bound = np.minimum(self.node_part[ends[:,0]], self.node_part[ends[:,1]])
		return bool((self.edge_part <= bound + tol).all())

	def __eq__(self, other) -> bool:
		if not isinstance(other, self.__class__):
			return False
		return self._num_nodes == other._num_nodes and np.array_equal(self._values, other._values)

	def __repr__(self) -> str:
		return f"<{self.__class__.__name__} nodes={self.node_part.tolist()} edges={self.edge_part.tolist()}>"


def suff_stats_batch(topology:GraphTopology, x:np.ndarray) -> np.ndarray:
	"""Sufficient statistics of a stack of configurations (or their factorized means), shape (..., |V|+|E|)"""

	x = np.asarray(x, dtype=np.float64)
	ends = topology.edge_array
	edges = x[..., ends[:,0]] * x[..., ends[:,1]]
	return np.concatenate([x, edges], axis=-1)

def suff_stats(topology:GraphTopology, x:typing.Sequence[int]) -> StatsVector:
	"""phi(x): node entries x_i, edge entries x_i * x_j"""
	x = as_configuration(topology, x)
	return StatsVector(topology.num_nodes, suff_stats_batch(topology, x))

def average_stats(stats:typing.Iterable[StatsVector]) -> StatsVector:
	"""Coordinatewise arithmetic mean"""

	stats = list(stats)
	if not stats:
		raise InvalidInputError("Cannot average an empty list of statistics")
	shapes = {(s.num_nodes, len(s)) for s in stats}
	if len(shapes) != 1:
		raise InvalidInputError("Statistics have inconsistent dimensions")
	# Sorted summation keeps the result independent of list order
	stacked = np.sort(np.stack([s.values for s in stats]), axis=0)
	return StatsVector(stats[0].num_nodes, stacked.sum(axis=0) / len(stats))
