"""The APCD outer loop

Each iteration runs an E step (persistent clamped chains feed a moving average
of per-data empirical means with step a(t)) and an M step (persistent free
chains estimate the model mean; theta moves by b(t) times the difference).
"""

import dataclasses, enum, json, logging, math, time, typing, io
import numpy as np
from .errors import InvalidInputError, ScheduleError, DivergenceError
from .topology import VariablePartition, as_configurations
from .stats import StatsVector, suff_stats_batch
from .model import PairwiseModel
from .exact import ENUMERATION_LIMIT, exact_mean_params, exact_marginal_loglik, exact_gradient_mmle
from .sampler import KernelParams, ChainPool, advance_e, advance_m
from .schedules import ScheduleSpec, ScheduleVerdict, schedule_value, validate_schedule_pair

__all__ = [
	"THETA_BOUND", "Variant", "TrainConfig", "TrainerState", "MetricsRecord", "batch_indices",
	"initial_state", "chain_averages", "sampled_mean_update", "e_step", "m_direction", "m_step",
	"run_loop", "train", "write_trace", "read_trace"
]

logger = logging.getLogger(__name__)

THETA_BOUND = 1e6

class Variant(enum.Enum):
	"""Training algorithm"""

	APCD = "apcd"
	MFPCD = "mfpcd"
	HAPCD = "hapcd"
	EXACT_EM = "exact-em"


@dataclasses.dataclass
class TrainConfig:
	"""Everything the outer loop needs besides the model and the data"""

	kernel:KernelParams = KernelParams(ell=10, num_chains=100)
	e_kernel:typing.Optional[KernelParams] = None
	a:ScheduleSpec = ScheduleSpec.power_law(1.0, 2/3)
	b:ScheduleSpec = ScheduleSpec.power_law(1.0, 1.0)
	iterations:int = 0
	batch_size:int = 0
	variant:Variant = Variant.APCD
	log_interval:int = 0
	seed:int = 0
	checkpoint_interval:int = 0
	workers:int = 1
	mean_field_iters:int = 30
	switch_fraction:float = 0.5
	hybrid_weight:typing.Optional[float] = None
	exact_limit:int = ENUMERATION_LIMIT
	max_outer:int = 200
	inner_tol:float = 1e-8
	config_digest:typing.Optional[str] = None

	@property
	def e_kernel_params(self) -> KernelParams:
		"""Kernel for the E step; the M-step kernel unless set separately"""
		return self.e_kernel if self.e_kernel is not None else self.kernel

	def iterations_per_epoch(self, num_data:int) -> int:
		if not self.batch_size or self.batch_size >= num_data:
			return 1
		return math.ceil(num_data / self.batch_size)

	def interval(self, num_data:int) -> int:
		"""Iterations between metrics records: ten epochs' worth unless set"""
		return self.log_interval if self.log_interval > 0 else 10 * self.iterations_per_epoch(num_data)

	def validate(self, num_data:int) -> ScheduleVerdict:
		"""Check the configuration against a dataset of the given size"""

		if num_data < 1:
			raise InvalidInputError("Dataset is empty")
		if self.batch_size < 0 or self.batch_size > num_data:
			raise InvalidInputError(f"Minibatch size {self.batch_size} must be between 0 and {num_data}")
		if self.iterations < 0:
			raise InvalidInputError("Iteration count must be non-negative")

		verdict = validate_schedule_pair(self.a, self.b, self.variant.value)
		if self.variant is Variant.APCD and not verdict.is_valid:
			raise ScheduleError(f"Schedules rejected for apcd: {verdict.reason}", verdict)
		if verdict.warning:
			logger.warning("Schedule pair does not satisfy the step-size conditions (%s); continuing for %s", verdict.reason, self.variant.value)
		return verdict


class TrainerState:
	"""Iteration counter, parameters, per-data means and chains of a run in progress"""

	def __init__(self, model:PairwiseModel, per_data_means:np.ndarray, pool:ChainPool, t:int=0, chain_means:typing.Optional[np.ndarray]=None):

		self._model = model
		self._per_data_means = np.array(per_data_means, dtype=np.float64)
		if self._per_data_means.ndim != 2 or self._per_data_means.shape[1] != model.topology.dimension:
			raise InvalidInputError(f"Per-data means of shape {self._per_data_means.shape} do not fit the model")
		self._chain_means = None if chain_means is None else np.array(chain_means, dtype=np.float64)
		self._pool = pool
		self.mean_field_means = None
		self.t = t
		self.refresh_empirical_mean()

	@property
	def t(self) -> int:
		"""Completed outer iterations"""
		return self._t

	@t.setter
	def t(self, t:int):
		if int(t) < 0:
			raise InvalidInputError("Iteration counter must be non-negative")
		self._t = int(t)

	@property
	def model(self) -> PairwiseModel:
		"""Current theta"""
		return self._model

	@model.setter
	def model(self, model:PairwiseModel):
		if model.topology != self._model.topology:
			raise InvalidInputError("Replacement model has a different topology")
		self._model = model

	@property
	def per_data_means(self) -> np.ndarray:
		"""(N, |V|+|E|) per-data empirical means"""
		return self._per_data_means

	@property
	def chain_means(self) -> typing.Optional[np.ndarray]:
		"""Sampled moving-average means kept alongside the fed ones by the hybrid variant"""
		return self._chain_means

	@property
	def empirical_mean(self) -> np.ndarray:
		"""Average of the per-data means"""
		return self._empirical_mean

	@property
	def pool(self) -> ChainPool:
		return self._pool

	def per_data_mean(self, n:int) -> StatsVector:
		return StatsVector(self._model.num_nodes, self._per_data_means[n])

	def refresh_empirical_mean(self):
		"""Average the per-data means over all data"""
		self._empirical_mean = self._per_data_means.mean(axis=0)

	def __repr__(self) -> str:
		return f"<{self.__class__.__name__} t={self.t} data={len(self._per_data_means)}>"


@dataclasses.dataclass
class MetricsRecord:
	"""One line of the metrics trace"""

	iteration:int
	variant:str
	a:typing.Optional[float] = None
	b:typing.Optional[float] = None
	grad_norm_estimate:typing.Optional[float] = None
	exact_loglik:typing.Optional[float] = None
	exact_grad_norm:typing.Optional[float] = None
	hybrid_weight:typing.Optional[float] = None
	test_parzen:typing.Optional[float] = None
	test_parzen_sem:typing.Optional[float] = None
	config_digest:typing.Optional[str] = None
	seed:typing.Optional[int] = None
	timestamp:float = dataclasses.field(default_factory=time.time)

	def comparable(self) -> dict:
		"""Fields that are a pure function of (config, data, seed)"""
		fields = dataclasses.asdict(self)
		fields.pop("timestamp")
		return fields

	def to_json(self) -> str:
		return json.dumps({key: value for key, value in dataclasses.asdict(self).items() if value is not None})

	@classmethod
	def from_json(cls, line:str) -> "MetricsRecord":
		try:
			fields = json.loads(line)
			return cls(**fields)
		except (ValueError, TypeError) as e:
			raise InvalidInputError(f"Malformed metrics record: {e}") from None

def write_trace(file:io.TextIOBase, records:typing.Iterable[MetricsRecord]):
	for record in records:
		print(record.to_json(), file=file)

def read_trace(file:io.TextIOBase) -> typing.List[MetricsRecord]:
	return [MetricsRecord.from_json(line) for line in file if line.strip()]


def batch_indices(t:int, num_data:int, batch_size:int) -> np.ndarray:
	"""The contiguous (wrapping) batch of data updated at iteration t"""
	if not batch_size or batch_size >= num_data:
		return np.arange(num_data)
	start = (t * batch_size) % num_data
	return (start + np.arange(batch_size)) % num_data

def chain_averages(pool:ChainPool, model:PairwiseModel, batch:np.ndarray) -> np.ndarray:
	"""(1/M) sum_m phi(v^n, h^{n,m}) for each n in the batch"""
	return suff_stats_batch(model.topology, pool.e_states[batch]).mean(axis=1)

def initial_state(model0:PairwiseModel, part:VariablePartition, data:np.ndarray, config:TrainConfig) -> TrainerState:
	"""Fresh chains from the master seed; per-data means start at the initial E-chain averages"""
	pool = ChainPool.initialize(part, data, config.e_kernel_params.num_chains, config.kernel.num_chains, config.seed)
	means = chain_averages(pool, model0, np.arange(len(data)))
	return TrainerState(model0, means, pool)

def sampled_mean_update(state:TrainerState, means:np.ndarray, part:VariablePartition, data:np.ndarray, config:TrainConfig, batch:np.ndarray) -> float:
	"""Into `means`: advance the batch's E-chains, then move toward their fresh averages with step a(t)"""

	a = schedule_value(config.a, state.t, config.iterations_per_epoch(len(data)))
	if a > 1:
		logger.warning("a(%d) = %g exceeds 1; per-data means may leave [0, 1]", state.t, a)
	advance_e(state.pool, state.model, part, data, config.e_kernel_params, batch, config.workers)
	fresh = chain_averages(state.pool, state.model, batch)
	means[batch] = (1.0 - a) * means[batch] + a * fresh
	return a

def e_step(state:TrainerState, part:VariablePartition, data, config:TrainConfig, batch:typing.Optional[np.ndarray]=None) -> TrainerState:
	"""Update the per-data means for `batch` (default: the rotating batch for iteration t)"""
	data = as_configurations(state.model.topology, data)
	if batch is None:
		batch = batch_indices(state.t, len(data), config.batch_size)
	sampled_mean_update(state, state.per_data_means, part, data, config, batch)
	state.refresh_empirical_mean()
	return state

def m_direction(state:TrainerState, config:TrainConfig, exact:bool=False) -> np.ndarray:
	"""mu_hat minus the model mean, estimated by the M-chains (or computed exactly)"""
	if exact:
		model_mean = exact_mean_params(state.model, config.exact_limit).values
	else:
		advance_m(state.pool, state.model, config.kernel, config.workers)
		model_mean = suff_stats_batch(state.model.topology, state.pool.m_states).mean(axis=0)
	return state.empirical_mean - model_mean

def m_step(state:TrainerState, config:TrainConfig, exact:bool=False, iterations_per_epoch:int=1) -> np.ndarray:
	"""Advance the M-chains and step theta along the gradient estimate; returns the estimate used"""

	b = schedule_value(config.b, state.t, iterations_per_epoch)
	direction = m_direction(state, config, exact)
	theta = state.model.parameters + b * direction
	if not np.isfinite(theta).all() or np.abs(theta).max() > THETA_BOUND:
		raise DivergenceError(state.t, f"|theta| exceeded {THETA_BOUND:g}")
	state.model = PairwiseModel.from_parameters(state.model.topology, theta)
	return direction


EUpdate = typing.Callable[[TrainerState, VariablePartition, np.ndarray, TrainConfig, np.ndarray], typing.Optional[dict]]
Monitor = typing.Callable[[PairwiseModel], typing.Tuple[float, float]]

def _apcd_update(state:TrainerState, part:VariablePartition, data:np.ndarray, config:TrainConfig, batch:np.ndarray) -> None:
	e_step(state, part, data, config, batch)

def run_loop(state:TrainerState, part:VariablePartition, data:np.ndarray, config:TrainConfig, e_update:EUpdate, metrics:typing.Optional[io.TextIOBase]=None, checkpoint:typing.Optional[typing.Callable[[TrainerState], None]]=None, callback:typing.Optional[typing.Callable[[TrainerState, MetricsRecord], None]]=None, monitor:typing.Optional[Monitor]=None) -> typing.Tuple[PairwiseModel, typing.List[MetricsRecord]]:
	"""Iterate E and M steps from state.t up to config.iterations

	A metrics record is emitted every config.interval() iterations and after the
	last one; `checkpoint` is called every config.checkpoint_interval iterations
	and at the end. When given, `monitor` scores the current model on held-out
	data for every record.
	"""

	num_data = len(data)
	per_epoch = config.iterations_per_epoch(num_data)
	interval = config.interval(num_data)
	with_exact = state.model.num_nodes <= config.exact_limit
	trace = []

	while state.t < config.iterations:
		t = state.t
		batch = batch_indices(t, num_data, config.batch_size)
		a = schedule_value(config.a, t, per_epoch)
		b = schedule_value(config.b, t, per_epoch)

		extra = e_update(state, part, data, config, batch) or {}
		try:
			direction = m_step(state, config, iterations_per_epoch=per_epoch)
		except DivergenceError as e:
			logger.error("%s", e)
			raise
		state.t = t + 1

		if state.t % interval == 0 or state.t == config.iterations:
			record = MetricsRecord(
				iteration = state.t,
				variant = config.variant.value,
				a = a,
				b = b,
				grad_norm_estimate = float(np.linalg.norm(direction)),
				config_digest = config.config_digest,
				seed = config.seed,
				**extra
			)
			if with_exact:
				record.exact_loglik = exact_marginal_loglik(state.model, part, data, config.exact_limit)
				record.exact_grad_norm = float(np.linalg.norm(exact_gradient_mmle(state.model, part, data, config.exact_limit).values))
			if monitor is not None:
				record.test_parzen, record.test_parzen_sem = monitor(state.model)
			logger.info("%s iteration %d: a=%.4g b=%.4g grad~%.4g%s", record.variant, record.iteration, a, b, record.grad_norm_estimate,
				(f" loglik={record.exact_loglik:.6f}" if record.exact_loglik is not None else "")
				+ (f" parzen={record.test_parzen:.4f}" if record.test_parzen is not None else ""))
			trace.append(record)
			if metrics is not None:
				print(record.to_json(), file=metrics, flush=True)
			if callback is not None:
				callback(state, record)

		if checkpoint is not None and ((config.checkpoint_interval and state.t % config.checkpoint_interval == 0) or state.t == config.iterations):
			checkpoint(state)

	return state.model, trace

def train(model0:PairwiseModel, part:VariablePartition, data, config:TrainConfig, state:typing.Optional[TrainerState]=None, metrics:typing.Optional[io.TextIOBase]=None, checkpoint:typing.Optional[typing.Callable[[TrainerState], None]]=None, callback:typing.Optional[typing.Callable[[TrainerState, MetricsRecord], None]]=None, monitor:typing.Optional[Monitor]=None) -> typing.Tuple[PairwiseModel, typing.List[MetricsRecord]]:
	"""Train with adiabatic persistent contrastive divergence; pass `state` to resume a checkpointed run"""

	part.check_topology(model0.topology)
	data = as_configurations(model0.topology, data)
	config.validate(len(data))
	if state is None:
		state = initial_state(model0, part, data, config)
	return run_loop(state, part, data, config, _apcd_update, metrics=metrics, checkpoint=checkpoint, callback=callback, monitor=monitor)
