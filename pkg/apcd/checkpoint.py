"""Versioned text checkpoints of a training run in progress

	apcd-checkpoint v1
	variant apcd
	config <config digest>
	seed 0
	iteration 120
	a power:c=1,p=0.66666666666666663
	b power:c=1,p=1
	data 50
	e-chains 1
	m-chains 100
	model
	apcd-model v1
	...
	end model
	mean 0 0.5 1 ...
	chain-mean 0 0.5 1 ...
	e-chain 0 0 0110 pcg64 <stream state>
	m-chain 0 1011 pcg64 <stream state>

Floats are written with 17 significant digits, so reading and writing a
checkpoint reproduces it byte for byte.
"""

import dataclasses, io, os, typing, tempfile
import numpy as np
from .errors import InvalidInputError
from .topology import as_configurations, to_bits, from_bits
from .model import PairwiseModel, read_model
from .sampler import STREAM_ALGORITHM, ChainPool, stream_to_hex, stream_from_hex
from .trainer import TrainerState

__all__ = ["CHECKPOINT_HEADER", "Checkpoint"]

CHECKPOINT_HEADER = "apcd-checkpoint v1"

_SCALARS = ("variant", "config", "seed", "iteration", "a", "b", "data", "e-chains", "m-chains")

def _format_row(values:np.ndarray) -> str:
	return " ".join(f"{value:.17g}" for value in values)


@dataclasses.dataclass
class Checkpoint:
	"""Everything needed to continue a run exactly where it stopped"""

	variant:str
	config_digest:str
	seed:int
	iteration:int
	a:str
	b:str
	model:PairwiseModel
	per_data_means:np.ndarray
	pool:ChainPool
	chain_means:typing.Optional[np.ndarray] = None

	@classmethod
	def from_state(cls, state:TrainerState, variant:str, config_digest:str, seed:int, a:str, b:str) -> "Checkpoint":
		return cls(
			variant = variant,
			config_digest = config_digest,
			seed = int(seed),
			iteration = state.t,
			a = str(a),
			b = str(b),
			model = state.model,
			per_data_means = state.per_data_means.copy(),
			pool = state.pool,
			chain_means = None if state.chain_means is None else state.chain_means.copy()
		)

	def restore(self) -> TrainerState:
		return TrainerState(self.model, self.per_data_means, self.pool, t=self.iteration, chain_means=self.chain_means)

	def write(self, file:io.TextIOBase):
		pool = self.pool
		print(CHECKPOINT_HEADER, file=file)
		print(f"variant {self.variant}", file=file)
		print(f"config {self.config_digest}", file=file)
		print(f"seed {self.seed}", file=file)
		print(f"iteration {self.iteration}", file=file)
		print(f"a {self.a}", file=file)
		print(f"b {self.b}", file=file)
		print(f"data {pool.num_data}", file=file)
		print(f"e-chains {pool.num_e_chains}", file=file)
		print(f"m-chains {pool.num_m_chains}", file=file)
		print("model", file=file)
		self.model.write(file)
		print("end model", file=file)
		for n, row in enumerate(self.per_data_means):
			print(f"mean {n} {_format_row(row)}", file=file)
		if self.chain_means is not None:
			for n, row in enumerate(self.chain_means):
				print(f"chain-mean {n} {_format_row(row)}", file=file)
		for n in range(pool.num_data):
			for m in range(pool.num_e_chains):
				print(f"e-chain {n} {m} {to_bits(pool.e_states[n, m])} {STREAM_ALGORITHM} {stream_to_hex(pool.e_streams[n][m])}", file=file)
		for m in range(pool.num_m_chains):
			print(f"m-chain {m} {to_bits(pool.m_states[m])} {STREAM_ALGORITHM} {stream_to_hex(pool.m_streams[m])}", file=file)

	def save(self, path:str):
		"""Write to `path` through a temporary file, so an interrupted save leaves the old checkpoint intact"""
		directory = os.path.dirname(os.path.abspath(path))
		handle, temporary = tempfile.mkstemp(dir=directory, prefix=".checkpoint-")
		try:
			with os.fdopen(handle, "w", encoding="utf-8") as file:
				self.write(file)
			os.replace(temporary, path)
		except BaseException:
			if os.path.exists(temporary):
				os.remove(temporary)
			raise

	@classmethod
	def from_file(cls, file:io.TextIOBase) -> "Checkpoint":

		scalars = {}
		model_lines = None
		means, chain_means, e_chains, m_chains = {}, {}, {}, {}

		for line_number, line in enumerate(file, start=1):
			line = line.rstrip("\n")
			try:
				if line_number == 1:
					if line.strip() != CHECKPOINT_HEADER:
						raise InvalidInputError(f"Expected header '{CHECKPOINT_HEADER}', found '{line.strip()}'")
					continue
				if model_lines is not None and not isinstance(model_lines, tuple):
					if line.strip() == "end model":
						model_lines = tuple(model_lines)
					else:
						model_lines.append(line)
					continue
				if not line.strip():
					continue

				keyword, _, rest = line.strip().partition(" ")
				fields = rest.split()
				if keyword in _SCALARS:
					if keyword in scalars:
						raise InvalidInputError(f"Duplicate '{keyword}' line")
					scalars[keyword] = rest.strip()
				elif keyword == "model":
					if model_lines is not None:
						raise InvalidInputError("Duplicate model block")
					model_lines = []
				elif keyword in ("mean", "chain-mean"):
					target = means if keyword == "mean" else chain_means
					target[int(fields[0])] = [float(value) for value in fields[1:]]
				elif keyword == "e-chain":
					n, m, bits, algorithm, blob = fields
					if algorithm != STREAM_ALGORITHM:
						raise InvalidInputError(f"Unsupported stream algorithm '{algorithm}'")
					e_chains[(int(n), int(m))] = (from_bits(bits), stream_from_hex(blob))
				elif keyword == "m-chain":
					m, bits, algorithm, blob = fields
					if algorithm != STREAM_ALGORITHM:
						raise InvalidInputError(f"Unsupported stream algorithm '{algorithm}'")
					m_chains[int(m)] = (from_bits(bits), stream_from_hex(blob))
				else:
					raise InvalidInputError(f"Unexpected keyword '{keyword}'")
			except (ValueError, IndexError) as e:
				raise InvalidInputError(f"Line {line_number}: {e}") from None

		missing = [key for key in _SCALARS if key not in scalars]
		if missing:
			raise InvalidInputError(f"Checkpoint is missing {', '.join(missing)}")
		if not isinstance(model_lines, tuple):
			raise InvalidInputError("Checkpoint has no complete model block")

		model, _ = read_model(io.StringIO("\n".join(model_lines) + "\n"))
		try:
			num_data, num_e, num_m = int(scalars["data"]), int(scalars["e-chains"]), int(scalars["m-chains"])
			seed, iteration = int(scalars["seed"]), int(scalars["iteration"])
		except ValueError as e:
			raise InvalidInputError(f"Malformed checkpoint count: {e}") from None

		def ordered(table:dict, keys:typing.Iterable, what:str) -> list:
			keys = list(keys)
			if sorted(table) != keys:
				raise InvalidInputError(f"Checkpoint {what} entries do not match the declared counts")
			return [table[key] for key in keys]

		data_keys = range(num_data)
		per_data_means = np.array(ordered(means, data_keys, "mean"), dtype=np.float64).reshape(num_data, model.topology.dimension)
		restored_chain_means = None
		if chain_means:
			restored_chain_means = np.array(ordered(chain_means, data_keys, "chain-mean"), dtype=np.float64).reshape(num_data, model.topology.dimension)

		e_entries = ordered(e_chains, [(n, m) for n in range(num_data) for m in range(num_e)], "e-chain")
		m_entries = ordered(m_chains, range(num_m), "m-chain")
		e_states = np.array([bits for bits, _ in e_entries], dtype=np.uint8).reshape(num_data, num_e, model.num_nodes)
		e_streams = [[e_entries[n * num_e + m][1] for m in range(num_e)] for n in range(num_data)]
		m_states = as_configurations(model.topology, np.array([bits for bits, _ in m_entries], dtype=np.uint8).reshape(num_m, model.num_nodes))
		pool = ChainPool(e_states, m_states, e_streams, [stream for _, stream in m_entries])

		return cls(scalars["variant"], scalars["config"], seed, iteration, scalars["a"], scalars["b"], model, per_data_means, pool, restored_chain_means)

	@classmethod
	def from_string(cls, text:str) -> "Checkpoint":
		return cls.from_file(io.StringIO(text))

	@classmethod
	def load(cls, path:str) -> "Checkpoint":
		with open(path, encoding="utf-8") as file:
			return cls.from_file(file)

	def __str__(self) -> str:
		text = io.StringIO()
		self.write(text)
		return text.getvalue()

	def __repr__(self) -> str:
		return f"<{self.__class__.__name__} variant={self.variant} iteration={self.iteration}>"
