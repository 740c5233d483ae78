import typing
import numpy as np
from .errors import InvalidInputError

__all__ = ["GraphTopology", "VariablePartition", "as_configuration", "as_configurations", "to_bits", "from_bits"]

class GraphTopology:
	"""An undirected graph over binary variables"""

	def __init__(self, num_nodes:int, edges:typing.Iterable[typing.Tuple[int,int]]=()):

		num_nodes = int(num_nodes)
		if num_nodes < 1:
			raise InvalidInputError(f"A topology needs at least one node ({num_nodes} given)")
		self._num_nodes = num_nodes

		normalized = []
		seen = set()
		for i, j in edges:
			i, j = int(i), int(j)
			if i == j:
				raise InvalidInputError(f"Self-loop on node {i}")
			if not (0 <= i < num_nodes and 0 <= j < num_nodes):
				raise InvalidInputError(f"Edge ({i}, {j}) references a node outside 0..{num_nodes-1}")
			edge = (min(i, j), max(i, j))
			if edge in seen:
				raise InvalidInputError(f"Duplicate edge {edge}")
			seen.add(edge)
			normalized.append(edge)

		self._edges = tuple(normalized)
		self._edge_lookup = {edge: index for index, edge in enumerate(self._edges)}

		adjacency = [[] for _ in range(num_nodes)]
		for index, (i, j) in enumerate(self._edges):
			adjacency[i].append((j, index))
			adjacency[j].append((i, index))
		self._adjacency = tuple(tuple(neighbors) for neighbors in adjacency)

		self._edge_array = np.array(self._edges, dtype=np.intp).reshape(-1, 2)

	@property
	def num_nodes(self) -> int:
		"""Number of variables"""
		return self._num_nodes

	@property
	def edges(self) -> typing.Tuple[typing.Tuple[int,int], ...]:
		"""Edges as (i, j) pairs with i < j, in statistic order"""
		return self._edges

	@property
	def num_edges(self) -> int:
		return len(self._edges)

	@property
	def dimension(self) -> int:
		"""Length of a statistics vector: one entry per node, then one per edge"""
		return self._num_nodes + len(self._edges)

	@property
	def adjacency(self) -> typing.Tuple[typing.Tuple[typing.Tuple[int,int], ...], ...]:
		"""Per node: (neighbor, edge index) pairs"""
		return self._adjacency

	@property
	def edge_array(self) -> np.ndarray:
		"""Edges as an (|E|, 2) integer array"""
		return self._edge_array

	def edge_index(self, i:int, j:int) -> int:
		"""Position of edge (i, j) in the edge list"""
		try:
			return self._edge_lookup[(min(i, j), max(i, j))]
		except KeyError:
			raise InvalidInputError(f"No edge between {i} and {j}") from None

	def neighbors(self, i:int) -> typing.List[int]:
		return [j for j, _ in self._adjacency[i]]

	def __eq__(self, other) -> bool:
		if not isinstance(other, self.__class__):
			return False
		return self.num_nodes == other.num_nodes and self.edges == other.edges

	def __hash__(self) -> int:
		return hash((self._num_nodes, self._edges))

	def __repr__(self) -> str:
		return f"<{self.__class__.__name__} nodes={self.num_nodes} edges={self.num_edges}>"


class VariablePartition:
	"""Split of the nodes into visible and hidden variables"""

	def __init__(self, num_nodes:int, hidden:typing.Iterable[int]=()):

		self._num_nodes = int(num_nodes)
		hidden = sorted(set(int(i) for i in hidden))
		if any(not 0 <= i < self._num_nodes for i in hidden):
			raise InvalidInputError(f"Hidden node index outside 0..{self._num_nodes-1}")

		self._hidden = tuple(hidden)
		hidden_set = set(hidden)
		self._visible = tuple(i for i in range(self._num_nodes) if i not in hidden_set)

		self._hidden_mask = np.zeros(self._num_nodes, dtype=bool)
		self._hidden_mask[list(self._hidden)] = True

	@classmethod
	def all_visible(cls, num_nodes:int) -> "VariablePartition":
		return cls(num_nodes, hidden=())

	@property
	def num_nodes(self) -> int:
		return self._num_nodes

	@property
	def visible(self) -> typing.Tuple[int, ...]:
		"""Sorted visible node indices"""
		return self._visible

	@property
	def hidden(self) -> typing.Tuple[int, ...]:
		"""Sorted hidden node indices"""
		return self._hidden

	@property
	def hidden_mask(self) -> np.ndarray:
		return self._hidden_mask.copy()

	def check_topology(self, topology:GraphTopology):
		"""Make sure this partition covers the given topology"""
		if topology.num_nodes != self._num_nodes:
			raise InvalidInputError(f"Partition covers {self._num_nodes} nodes but the topology has {topology.num_nodes}")

	def clamp(self, x:np.ndarray, v:np.ndarray) -> np.ndarray:
		"""Copy of x with the visible entries taken from v"""
		x = np.array(x, dtype=np.uint8, copy=True)
		visible = list(self._visible)
		x[..., visible] = np.asarray(v, dtype=np.uint8)[..., visible]
		return x

	def matches(self, x:np.ndarray, v:np.ndarray) -> bool:
		"""Whether the visible entries of x equal those of v"""
		visible = list(self._visible)
		return bool(np.array_equal(np.asarray(x)[..., visible], np.asarray(v)[..., visible]))

	def __eq__(self, other) -> bool:
		if not isinstance(other, self.__class__):
			return False
		return self._num_nodes == other._num_nodes and self._hidden == other._hidden

	def __hash__(self) -> int:
		return hash((self._num_nodes, self._hidden))

	def __repr__(self) -> str:
		return f"<{self.__class__.__name__} visible={len(self.visible)} hidden={len(self.hidden)}>"


def as_configuration(topology:GraphTopology, x:typing.Sequence[int]) -> np.ndarray:
	"""Validate a binary configuration for the topology and return it as a uint8 vector"""

	x = np.asarray(x)
	if x.ndim != 1 or x.shape[0] != topology.num_nodes:
		raise InvalidInputError(f"Configuration of shape {x.shape} does not match {topology.num_nodes} nodes")
	if not np.isin(x, (0, 1)).all():
		raise InvalidInputError("Configuration entries must be 0 or 1")
	return x.astype(np.uint8)

def as_configurations(topology:GraphTopology, data:typing.Iterable[typing.Sequence[int]]) -> np.ndarray:
	"""Validate a batch of configurations and return it as an (N, |V|) uint8 array"""

	data = np.asarray(data if isinstance(data, np.ndarray) else list(data))
	if data.ndim == 1 and data.size == 0:
		data = data.reshape(0, topology.num_nodes)
	if data.ndim != 2 or data.shape[1] != topology.num_nodes:
		raise InvalidInputError(f"Data of shape {data.shape} does not match {topology.num_nodes} nodes")
	if not np.isin(data, (0, 1)).all():
		raise InvalidInputError("Configuration entries must be 0 or 1")
	return data.astype(np.uint8)

def to_bits(x:np.ndarray) -> str:
	return "".join("1" if bit else "0" for bit in x)

def from_bits(bits:str) -> np.ndarray:
	bits = bits.strip()
	if not bits or set(bits) - {"0", "1"}:
		raise InvalidInputError(f"Not a bit-string: {bits!r}")
	return np.fromiter((bit == "1" for bit in bits), dtype=np.uint8, count=len(bits))
