"""Synthetic grid experiments: random grid models, ground-truth samples, hidden-node selection, datasets"""

import dataclasses, hashlib, logging, math, typing, io
import numpy as np
from .errors import InvalidInputError
from .topology import GraphTopology, VariablePartition, as_configurations, to_bits, from_bits
from .model import PairwiseModel
from .sampler import chain_stream, run_sweeps

__all__ = ["DATA_HEADER", "GridSpec", "grid_topology", "random_grid_model", "generate_samples", "select_hidden", "Dataset"]

logger = logging.getLogger(__name__)

DATA_HEADER = "apcd-data v1"

@dataclasses.dataclass(frozen=True)
class GridSpec:
	"""Shape and parameter ranges of a random grid model"""

	rows:int = 10
	cols:int = 10
	bias_low:float = -3.0
	bias_high:float = 3.0
	weight_std:float = math.sqrt(0.5)
	hidden_fraction:float = 0.5

	def __post_init__(self):
		if int(self.rows) < 1 or int(self.cols) < 1:
			raise InvalidInputError(f"Grid dimensions must be positive ({self.rows}x{self.cols} given)")
		if not self.bias_low <= self.bias_high:
			raise InvalidInputError("bias_low must not exceed bias_high")
		if not self.weight_std > 0:
			raise InvalidInputError("weight_std must be positive")
		if not 0 <= self.hidden_fraction < 1:
			raise InvalidInputError("hidden_fraction must lie in [0, 1)")

	@property
	def num_nodes(self) -> int:
		return self.rows * self.cols


def grid_topology(rows:int, cols:int) -> GraphTopology:
	"""4-neighbor lattice, node r*cols+c; horizontal edges of each row, then vertical edges"""

	if int(rows) < 1 or int(cols) < 1:
		raise InvalidInputError(f"Grid dimensions must be positive ({rows}x{cols} given)")
	edges = [(r * cols + c, r * cols + c + 1) for r in range(rows) for c in range(cols - 1)]
	edges += [(r * cols + c, (r + 1) * cols + c) for r in range(rows - 1) for c in range(cols)]
	return GraphTopology(rows * cols, edges)

def random_grid_model(spec:GridSpec, seed:int) -> PairwiseModel:
	"""Biases uniform on [bias_low, bias_high], weights Gaussian with mean 0 and standard deviation weight_std"""
	topology = grid_topology(spec.rows, spec.cols)
	rng = np.random.default_rng(seed)
	node_bias = rng.uniform(spec.bias_low, spec.bias_high, size=topology.num_nodes)
	edge_weight = rng.normal(0.0, spec.weight_std, size=topology.num_edges)
	return PairwiseModel(topology, node_bias, edge_weight)

def generate_samples(model:PairwiseModel, count:int, sweeps:int, seed:int, workers:int=1) -> np.ndarray:
	"""`count` samples, each the state of its own chain after `sweeps` full sweeps from uniform random bits"""

	if int(count) < 0 or int(sweeps) < 0:
		raise InvalidInputError("Sample and sweep counts must be non-negative")
	streams = [chain_stream(seed, "sample", k) for k in range(count)]
	states = np.zeros((count, model.num_nodes), dtype=np.uint8)
	for k, stream in enumerate(streams):
		states[k] = stream.integers(0, 2, size=model.num_nodes)
	logger.debug("Generating %d samples with %d sweeps each", count, sweeps)
	return run_sweeps(model, states, streams, sweeps, workers=workers)

def select_hidden(topology:GraphTopology, fraction:float, seed:int) -> VariablePartition:
	"""floor(fraction * |V|) hidden nodes drawn uniformly without replacement"""
	if not 0 <= fraction < 1:
		raise InvalidInputError("Hidden fraction must lie in [0, 1)")
	count = math.floor(fraction * topology.num_nodes)
	rng = np.random.default_rng(seed)
	return VariablePartition(topology.num_nodes, rng.choice(topology.num_nodes, size=count, replace=False).tolist())


class Dataset:
	"""Binary configurations stored one bit-string per line"""

	def __init__(self, rows:np.ndarray):
		rows = np.asarray(rows)
		if rows.ndim != 2 or rows.shape[1] < 1:
			raise InvalidInputError(f"Dataset rows must form an (N, |V|) array, got shape {rows.shape}")
		self._rows = as_configurations(GraphTopology(rows.shape[1]), rows)
		self._rows.flags.writeable = False

	@property
	def rows(self) -> np.ndarray:
		return self._rows

	@property
	def num_nodes(self) -> int:
		return self._rows.shape[1]

	def __len__(self) -> int:
		return len(self._rows)

	def write(self, file:io.TextIOBase, comments:typing.Iterable[str]=()):
		print(DATA_HEADER, file=file)
		for comment in comments:
			print(f"# {comment}", file=file)
		print(f"nodes {self.num_nodes}", file=file)
		for row in self._rows:
			print(to_bits(row), file=file)

	@classmethod
	def from_file(cls, file:io.TextIOBase) -> "Dataset":
		header_seen = False
		num_nodes = None
		rows = []
		for line_number, line in enumerate(file, start=1):
			line = line.strip()
			if not line or line.startswith("#"):
				continue
			try:
				if not header_seen:
					if line != DATA_HEADER:
						raise InvalidInputError(f"Expected header '{DATA_HEADER}', found '{line}'")
					header_seen = True
				elif num_nodes is None:
					keyword, _, value = line.partition(" ")
					if keyword != "nodes" or not value.strip().isdigit():
						raise InvalidInputError(f"Expected 'nodes <count>', found '{line}'")
					num_nodes = int(value)
				else:
					row = from_bits(line)
					if len(row) != num_nodes:
						raise InvalidInputError(f"Row has {len(row)} bits, expected {num_nodes}")
					rows.append(row)
			except InvalidInputError as e:
				raise InvalidInputError(f"Line {line_number}: {e}") from None

		if not header_seen:
			raise InvalidInputError(f"Dataset has no '{DATA_HEADER}' header")
		if num_nodes is None:
			raise InvalidInputError("Dataset declares no node count")
		return cls(np.array(rows, dtype=np.uint8).reshape(len(rows), num_nodes))

	@classmethod
	def from_string(cls, text:str) -> "Dataset":
		return cls.from_file(io.StringIO(text))

	def __str__(self) -> str:
		text = io.StringIO()
		self.write(text)
		return text.getvalue()

	@property
	def digest(self) -> str:
		"""SHA-256 of the file rendering"""
		return hashlib.sha256(str(self).encode("utf-8")).hexdigest()

	def __eq__(self, other) -> bool:
		if not isinstance(other, self.__class__):
			return False
		return np.array_equal(self._rows, other._rows)

	def __repr__(self) -> str:
		return f"<{self.__class__.__name__} rows={len(self)} nodes={self.num_nodes}>"
