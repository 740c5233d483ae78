"""Gibbs transition kernels and persistent chain pools

One transition is one systematic-scan sweep: every free node is resampled from
its full conditional in ascending index order. Each chain owns a PCG64 stream
derived from (master seed, role, n, m), so results do not depend on how chains
are split between workers.
"""

import dataclasses, logging, typing
import concurrent.futures
import numpy as np
from scipy.special import expit
from .errors import InvalidInputError
from .topology import VariablePartition, as_configuration, as_configurations
from .model import PairwiseModel
from .exact import all_configurations, _check_capacity

__all__ = [
	"STREAM_ROLES", "STREAM_ALGORITHM", "chain_stream", "stream_to_hex", "stream_from_hex",
	"conditional_on", "gibbs_sweep_free", "gibbs_sweep_clamped", "run_sweeps", "sweep_kernel_matrix",
	"KernelParams", "ChainPool", "advance_e", "advance_m"
]

logger = logging.getLogger(__name__)

STREAM_ROLES = {"init": 0, "e": 1, "m": 2, "sample": 3, "ais": 4}
STREAM_ALGORITHM = "pcg64"
UNIFORMS_PER_DRAW = 1 << 22

def chain_stream(seed:int, role:str, n:int=0, m:int=0) -> np.random.Generator:
	"""Independent random stream for chain (n, m) of the given role

	The stream is the PCG64 generator seeded by SeedSequence(seed, spawn_key=(role code, n, m)).
	"""
	if role not in STREAM_ROLES:
		raise InvalidInputError(f"Unknown stream role '{role}'")
	if int(seed) < 0:
		raise InvalidInputError("Master seed must be non-negative")
	sequence = np.random.SeedSequence(int(seed), spawn_key=(STREAM_ROLES[role], int(n), int(m)))
	return np.random.Generator(np.random.PCG64(sequence))

def stream_to_hex(stream:np.random.Generator) -> str:
	"""Opaque hex blob of a PCG64 stream state"""
	state = stream.bit_generator.state
	if state["bit_generator"] != "PCG64":
		raise InvalidInputError(f"Unsupported bit generator {state['bit_generator']}")
	return f"{state['state']['state']:032x}{state['state']['inc']:032x}{state['has_uint32']:01x}{state['uinteger']:08x}"

def stream_from_hex(blob:str) -> np.random.Generator:
	"""Rebuild a stream written by stream_to_hex"""
	if len(blob) != 73:
		raise InvalidInputError(f"Stream state has length {len(blob)}, expected 73")
	try:
		bit_generator = np.random.PCG64()
		bit_generator.state = {
			"bit_generator": "PCG64",
			"state": {"state": int(blob[:32], 16), "inc": int(blob[32:64], 16)},
			"has_uint32": int(blob[64], 16),
			"uinteger": int(blob[65:], 16)
		}
	except ValueError as e:
		raise InvalidInputError(f"Malformed stream state: {e}") from None
	return np.random.Generator(bit_generator)


def conditional_on(model:PairwiseModel, x:typing.Sequence[int], i:int) -> float:
	"""p(x_i = 1 | x_-i) = logistic(theta_i + sum_j theta_ij x_j)"""
	if not 0 <= i < model.num_nodes:
		raise InvalidInputError(f"Node {i} is outside the model")
	x = as_configuration(model.topology, x).astype(np.float64)
	return float(expit(model.local_field(x, i)))

def _sweep(model:PairwiseModel, states:np.ndarray, uniforms:np.ndarray, nodes:typing.Sequence[int]):
	"""Apply uniforms.shape[1] sweeps over `nodes` to a (C, |V|) block of states in place"""

	x = states.astype(np.float64)
	for sweep in range(uniforms.shape[1]):
		for k, i in enumerate(nodes):
			x[:, i] = uniforms[:, sweep, k] < expit(model.local_field(x, i))
	states[:] = x

def run_sweeps(model:PairwiseModel, states:np.ndarray, streams:typing.Sequence[np.random.Generator], sweeps:int, nodes:typing.Optional[typing.Sequence[int]]=None, workers:int=1) -> np.ndarray:
	"""Advance a (C, |V|) stack of chains by `sweeps` sweeps over `nodes` in place

	Chain c draws sweeps*|nodes| uniforms from streams[c]. Work is split into
	contiguous blocks when workers > 1; the result is the same for any split.
	"""

	nodes = list(range(model.num_nodes)) if nodes is None else list(nodes)
	if len(streams) != len(states):
		raise InvalidInputError(f"{len(states)} chains but {len(streams)} streams")
	if sweeps <= 0 or not nodes or not len(states):
		return states

	def advance_block(block:range):
		chunk = states[block.start:block.stop]
		# Uniforms are drawn a few sweeps at a time; the stream sequence is the same either way
		per_draw = max(1, UNIFORMS_PER_DRAW // (len(block) * len(nodes)))
		for done in range(0, sweeps, per_draw):
			count = min(per_draw, sweeps - done)
			uniforms = np.stack([streams[c].random((count, len(nodes))) for c in block])
			_sweep(model, chunk, uniforms, nodes)
		states[block.start:block.stop] = chunk

	workers = max(1, min(int(workers), len(states)))
	bounds = np.linspace(0, len(states), workers + 1).astype(int)
	blocks = [range(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

	if len(blocks) == 1:
		advance_block(blocks[0])
	else:
		logger.debug("Advancing %d chains on %d workers", len(states), len(blocks))
		with concurrent.futures.ThreadPoolExecutor(max_workers=len(blocks)) as pool:
			list(pool.map(advance_block, blocks))
	return states

def gibbs_sweep_free(model:PairwiseModel, x:typing.Sequence[int], stream:np.random.Generator) -> np.ndarray:
	"""One sweep of K^M: every node resampled in ascending order"""
	x = as_configuration(model.topology, x)[None, :].copy()
	return run_sweeps(model, x, [stream], 1)[0]

def gibbs_sweep_clamped(model:PairwiseModel, part:VariablePartition, v:typing.Sequence[int], h:typing.Sequence[int], stream:np.random.Generator) -> np.ndarray:
	"""One sweep of K^E: only hidden nodes resampled, visible entries left at v"""
	part.check_topology(model.topology)
	v = as_configuration(model.topology, v)
	h = as_configuration(model.topology, h)
	if not part.matches(h, v):
		raise InvalidInputError("Visible entries of the chain state do not match the clamped assignment")
	return run_sweeps(model, h[None, :].copy(), [stream], 1, nodes=part.hidden)[0]

def sweep_kernel_matrix(model:PairwiseModel, part:typing.Optional[VariablePartition]=None, v:typing.Optional[typing.Sequence[int]]=None, limit:int=12) -> np.ndarray:
	"""The explicit one-sweep transition matrix over the free states

	Without a partition the states are all configurations (indexed as in
	exact.all_configurations); with one, they are the hidden completions of v,
	hidden node k being bit k of the state index.
	"""

	if part is None:
		free = list(range(model.num_nodes))
		base = np.zeros(model.num_nodes, dtype=np.uint8)
	else:
		part.check_topology(model.topology)
		free = list(part.hidden)
		base = as_configuration(model.topology, v)
	_check_capacity(len(free), limit)

	count = 2 ** len(free)
	states = np.repeat(base[None, :], count, axis=0).astype(np.float64)
	states[:, free] = all_configurations(len(free))
	index = np.arange(count)

	kernel = np.eye(count)
	for k, i in enumerate(free):
		p_on = expit(model.local_field(states, i))
		on = ((index >> k) & 1).astype(bool)
		# Resampling node i keeps every other coordinate, so mass at s' comes from s' and s' with bit k flipped
		kernel = (kernel + kernel[:, index ^ (1 << k)]) * np.where(on, p_on, 1.0 - p_on)[None, :]
	return kernel


@dataclasses.dataclass(frozen=True)
class KernelParams:
	"""Transitions per sample (ell) and number of chains (M)"""

	ell:int = 10
	num_chains:int = 100

	def __post_init__(self):
		if int(self.ell) < 0:
			raise InvalidInputError(f"ell must be non-negative ({self.ell} given)")
		if int(self.num_chains) < 1:
			raise InvalidInputError(f"At least one chain is required ({self.num_chains} given)")


class ChainPool:
	"""Persistent chain states: N x M clamped E-chains and M free M-chains, each with its own stream"""

	def __init__(self, e_states:np.ndarray, m_states:np.ndarray, e_streams:typing.Sequence[typing.Sequence[np.random.Generator]], m_streams:typing.Sequence[np.random.Generator]):

		self._e_states = np.array(e_states, dtype=np.uint8)
		self._m_states = np.array(m_states, dtype=np.uint8)
		if self._e_states.ndim != 3 or self._m_states.ndim != 2:
			raise InvalidInputError("E-chain states must be (N, M, |V|) and M-chain states (M, |V|)")
		if self._e_states.shape[2] != self._m_states.shape[1]:
			raise InvalidInputError("E-chains and M-chains disagree on the number of nodes")

		self._e_streams = [list(row) for row in e_streams]
		self._m_streams = list(m_streams)
		if len(self._e_streams) != self._e_states.shape[0] or any(len(row) != self._e_states.shape[1] for row in self._e_streams):
			raise InvalidInputError("One stream is required per E-chain")
		if len(self._m_streams) != self._m_states.shape[0]:
			raise InvalidInputError("One stream is required per M-chain")

	@classmethod
	def initialize(cls, part:VariablePartition, data:np.ndarray, e_chains:int, m_chains:int, seed:int) -> "ChainPool":
		"""Start every chain from uniform random bits drawn from its own stream, E-chains clamped to their datum"""

		data = np.asarray(data, dtype=np.uint8)
		num_data, num_nodes = data.shape
		hidden = list(part.hidden)

		e_streams = [[chain_stream(seed, "e", n, m) for m in range(e_chains)] for n in range(num_data)]
		e_states = np.repeat(data[:, None, :], e_chains, axis=1)
		for n in range(num_data):
			for m in range(e_chains):
				e_states[n, m, hidden] = e_streams[n][m].integers(0, 2, size=len(hidden))

		m_streams = [chain_stream(seed, "m", 0, m) for m in range(m_chains)]
		m_states = np.stack([stream.integers(0, 2, size=num_nodes) for stream in m_streams]).astype(np.uint8)

		return cls(e_states, m_states, e_streams, m_streams)

	@property
	def e_states(self) -> np.ndarray:
		"""(N, M, |V|) E-chain configurations"""
		return self._e_states

	@property
	def m_states(self) -> np.ndarray:
		"""(M, |V|) M-chain configurations"""
		return self._m_states

	@property
	def e_streams(self) -> typing.List[typing.List[np.random.Generator]]:
		return self._e_streams

	@property
	def m_streams(self) -> typing.List[np.random.Generator]:
		return self._m_streams

	@property
	def num_data(self) -> int:
		return self._e_states.shape[0]

	@property
	def num_e_chains(self) -> int:
		return self._e_states.shape[1]

	@property
	def num_m_chains(self) -> int:
		return self._m_states.shape[0]

	def __eq__(self, other) -> bool:
		if not isinstance(other, self.__class__):
			return False
		return (
			np.array_equal(self._e_states, other._e_states)
			and np.array_equal(self._m_states, other._m_states)
			and [[stream_to_hex(s) for s in row] for row in self._e_streams] == [[stream_to_hex(s) for s in row] for row in other._e_streams]
			and [stream_to_hex(s) for s in self._m_streams] == [stream_to_hex(s) for s in other._m_streams]
		)

	def __repr__(self) -> str:
		return f"<{self.__class__.__name__} data={self.num_data} e_chains={self.num_e_chains} m_chains={self.num_m_chains}>"


def advance_e(pool:ChainPool, model:PairwiseModel, part:VariablePartition, data, kp:KernelParams, batch:typing.Optional[typing.Sequence[int]]=None, workers:int=1) -> ChainPool:
	"""ell clamped sweeps on every E-chain of the data in `batch` (default: all data)"""

	data = as_configurations(model.topology, data)
	if len(data) != pool.num_data:
		raise InvalidInputError(f"Pool holds chains for {pool.num_data} data but {len(data)} were given")
	if kp.num_chains != pool.num_e_chains:
		raise InvalidInputError(f"Pool holds {pool.num_e_chains} E-chains per datum, kernel asks for {kp.num_chains}")

	batch = np.arange(pool.num_data) if batch is None else np.asarray(list(batch), dtype=np.intp)
	if not kp.ell or not len(batch):
		return pool

	flat = pool.e_states[batch].reshape(-1, model.num_nodes)
	streams = [stream for n in batch for stream in pool.e_streams[n]]
	run_sweeps(model, flat, streams, kp.ell, nodes=part.hidden, workers=workers)
	pool.e_states[batch] = flat.reshape(len(batch), pool.num_e_chains, model.num_nodes)
	return pool

def advance_m(pool:ChainPool, model:PairwiseModel, kp:KernelParams, workers:int=1) -> ChainPool:
	"""ell free sweeps on every M-chain"""

	if kp.num_chains != pool.num_m_chains:
		raise InvalidInputError(f"Pool holds {pool.num_m_chains} M-chains, kernel asks for {kp.num_chains}")
	if model.num_nodes != pool.m_states.shape[1]:
		raise InvalidInputError("Model and pool disagree on the number of nodes")
	run_sweeps(model, pool.m_states, pool.m_streams, kp.ell, workers=workers)
	return pool
