import typing, io
import numpy as np
from .errors import InvalidInputError
from .topology import GraphTopology, VariablePartition, as_configuration
from .stats import StatsVector, suff_stats_batch

__all__ = ["PairwiseModel", "log_unnormalized", "log_unnormalized_batch", "read_model", "MODEL_HEADER"]

MODEL_HEADER = "apcd-model v1"

class PairwiseModel:
	"""Canonical parameters of a pairwise binary exponential family bound to a topology"""

	def __init__(self, topology:GraphTopology, node_bias:typing.Optional[typing.Sequence[float]]=None, edge_weight:typing.Optional[typing.Sequence[float]]=None):

		self._topology = topology

		node_bias = np.zeros(topology.num_nodes) if node_bias is None else np.array(node_bias, dtype=np.float64)
		edge_weight = np.zeros(topology.num_edges) if edge_weight is None else np.array(edge_weight, dtype=np.float64)

		if node_bias.shape != (topology.num_nodes,):
			raise InvalidInputError(f"Expected {topology.num_nodes} node biases, got shape {node_bias.shape}")
		if edge_weight.shape != (topology.num_edges,):
			raise InvalidInputError(f"Expected {topology.num_edges} edge weights, got shape {edge_weight.shape}")
		if not (np.isfinite(node_bias).all() and np.isfinite(edge_weight).all()):
			raise InvalidInputError("Model parameters must be finite")

		node_bias.flags.writeable = False
		edge_weight.flags.writeable = False
		self._node_bias = node_bias
		self._edge_weight = edge_weight

	@classmethod
	def from_parameters(cls, topology:GraphTopology, parameters:typing.Union[typing.Sequence[float], StatsVector]) -> "PairwiseModel":
		"""Build a model from a flat parameter vector in statistics layout"""

		if isinstance(parameters, StatsVector):
			parameters = parameters.values
		parameters = np.asarray(parameters, dtype=np.float64)
		if parameters.shape != (topology.dimension,):
			raise InvalidInputError(f"Expected {topology.dimension} parameters, got shape {parameters.shape}")
		return cls(topology, parameters[:topology.num_nodes], parameters[topology.num_nodes:])

	@property
	def topology(self) -> GraphTopology:
		return self._topology

	@property
	def node_bias(self) -> np.ndarray:
		"""theta_i per node"""
		return self._node_bias

	@property
	def edge_weight(self) -> np.ndarray:
		"""theta_ij per edge"""
		return self._edge_weight

	@property
	def num_nodes(self) -> int:
		return self._topology.num_nodes

	@property
	def parameters(self) -> np.ndarray:
		"""All parameters as one vector: biases, then weights"""
		return np.concatenate([self._node_bias, self._edge_weight])

	def scaled(self, beta:float) -> "PairwiseModel":
		"""The model with every parameter multiplied by beta"""
		return self.__class__(self._topology, beta * self._node_bias, beta * self._edge_weight)

	def local_field(self, x:np.ndarray, i:int) -> np.ndarray:
		"""theta_i + sum over neighbors j of theta_ij x_j, for one configuration or a stack of them

		Neighbors are accumulated in adjacency order, so a row gives the same bits alone or in a batch.
		"""
		field = np.full(np.shape(x)[:-1], self._node_bias[i], dtype=np.float64)
		for j, edge in self._topology.adjacency[i]:
			field = field + self._edge_weight[edge] * x[..., j]
		return field

	def write(self, file:io.TextIOBase, partition:typing.Optional[VariablePartition]=None, comments:typing.Iterable[str]=()):
		"""Write the model (and optionally its partition) to a text stream, with `#` comment lines after the header"""

		print(MODEL_HEADER, file=file)
		for comment in comments:
			print(f"# {comment}", file=file)
		print(f"nodes {self.num_nodes}", file=file)
		for i, j in self._topology.edges:
			print(f"edge {i} {j}", file=file)
		for i, value in enumerate(self._node_bias):
			print(f"bias {i} {value:.17g}", file=file)
		for (i, j), value in zip(self._topology.edges, self._edge_weight):
			print(f"weight {i} {j} {value:.17g}", file=file)
		if partition is not None:
			for i in partition.hidden:
				print(f"hidden {i}", file=file)

	@classmethod
	def from_file(cls, file:io.TextIOBase) -> "PairwiseModel":
		"""Read a model from a text stream, ignoring any partition lines"""
		return read_model(file)[0]

	@classmethod
	def from_string(cls, text:str) -> "PairwiseModel":
		return cls.from_file(io.StringIO(text))

	def __eq__(self, other) -> bool:
		if not isinstance(other, self.__class__):
			return False
		return self._topology == other._topology and np.array_equal(self.parameters, other.parameters)

	def __str__(self) -> str:
		text = io.StringIO()
		self.write(text)
		return text.getvalue()

	def __repr__(self) -> str:
		return f"<{self.__class__.__name__} nodes={self.num_nodes} edges={self._topology.num_edges}>"


def read_model(file:io.TextIOBase) -> typing.Tuple[PairwiseModel, typing.Optional[VariablePartition]]:
	"""Parse an `apcd-model v1` stream into a model and, if declared, its partition"""

	lines = iter(enumerate(file.readlines(), start=1))
	header = next(lines, (1, ""))[1].strip()
	if header != MODEL_HEADER:
		raise InvalidInputError(f"Line 1: expected header '{MODEL_HEADER}', found '{header}'")

	num_nodes = None
	edges = []
	biases = {}
	weights = {}
	hidden = []

	for line_num, line in lines:
		tokens = line.split()
		if not tokens or tokens[0].startswith("#"):
			continue
		try:
			keyword, args = tokens[0], tokens[1:]
			if keyword == "nodes" and len(args) == 1:
				num_nodes = int(args[0])
			elif keyword == "edge" and len(args) == 2:
				edges.append((int(args[0]), int(args[1])))
			elif keyword == "bias" and len(args) == 2:
				node = int(args[0])
				if node in biases:
					raise ValueError(f"Duplicate bias for node {node}")
				biases[node] = float(args[1])
			elif keyword == "weight" and len(args) == 3:
				edge = (min(int(args[0]), int(args[1])), max(int(args[0]), int(args[1])))
				if edge in weights:
					raise ValueError(f"Duplicate weight for edge {edge[0]} {edge[1]}")
				weights[edge] = float(args[2])
			elif keyword == "hidden" and len(args) == 1:
				hidden.append(int(args[0]))
			else:
				raise ValueError(f"Unrecognized line: {line.strip()}")
		except ValueError as e:
			raise InvalidInputError(f"Line {line_num}: {e}") from None

	if num_nodes is None:
		raise InvalidInputError("Model file does not declare a node count")

	topology = GraphTopology(num_nodes, edges)
	if set(biases) - set(range(num_nodes)):
		raise InvalidInputError("Bias given for a node outside the topology")
	if set(weights) - set(topology.edges):
		raise InvalidInputError("Weight given for an edge outside the topology")

	model = PairwiseModel(
		topology,
		node_bias = [biases.get(i, 0.0) for i in range(num_nodes)],
		edge_weight = [weights.get(edge, 0.0) for edge in topology.edges]
	)
	partition = VariablePartition(num_nodes, hidden) if hidden else None
	return model, partition


def log_unnormalized_batch(model:PairwiseModel, x:np.ndarray) -> np.ndarray:
	"""<theta, phi(x)> for a stack of configurations"""
	return suff_stats_batch(model.topology, x) @ model.parameters

def log_unnormalized(model:PairwiseModel, x:typing.Sequence[int]) -> float:
	"""<theta, phi(x)>"""
	x = as_configuration(model.topology, x)
	return float(log_unnormalized_batch(model, x))
