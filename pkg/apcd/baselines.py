"""Reference algorithms: mean-field PCD, the hybrid of mean field and APCD, and exact EM"""

import dataclasses, logging, math, typing, io
import numpy as np
from scipy.special import expit
from .errors import InvalidInputError
from .topology import GraphTopology, VariablePartition, as_configuration, as_configurations
from .stats import StatsVector, suff_stats_batch
from .model import PairwiseModel
from .exact import ENUMERATION_LIMIT, exact_log_partition, exact_mean_params, exact_posterior_mean, exact_marginal_loglik, exact_gradient_mmle
from .sampler import ChainPool
from .trainer import Variant, TrainConfig, TrainerState, MetricsRecord, chain_averages, sampled_mean_update, run_loop

__all__ = [
	"MeanFieldState", "mean_field_posterior", "mean_field_posteriors", "mf_stats", "mean_field_stats",
	"train_mfpcd", "HybridRamp", "train_hapcd", "fit_mean_parameters", "train_exact_em"
]

logger = logging.getLogger(__name__)

@dataclasses.dataclass
class MeanFieldState:
	"""Factorized hidden marginals q^n, one row per datum, columns in partition.hidden order"""

	hidden:typing.Tuple[int, ...]
	marginals:np.ndarray

	def __post_init__(self):
		self.marginals = np.asarray(self.marginals, dtype=np.float64)
		if self.marginals.ndim != 2 or self.marginals.shape[1] != len(self.hidden):
			raise InvalidInputError(f"Marginals of shape {self.marginals.shape} do not match {len(self.hidden)} hidden nodes")
		if ((self.marginals < 0) | (self.marginals > 1)).any():
			raise InvalidInputError("Mean-field marginals must lie in [0, 1]")


def _mean_field(model:PairwiseModel, part:VariablePartition, data:np.ndarray, iters:int) -> np.ndarray:
	"""Visible entries from the data, hidden entries from `iters` ascending fixed-point sweeps started at 0.5"""
	if iters < 0:
		raise InvalidInputError("Mean-field iteration count must be non-negative")
	m = np.array(data, dtype=np.float64)
	hidden = list(part.hidden)
	m[:, hidden] = 0.5
	for _ in range(iters):
		for i in hidden:
			m[:, i] = expit(model.local_field(m, i))
	return m

def mean_field_posterior(model:PairwiseModel, part:VariablePartition, v:typing.Sequence[int], iters:int=30) -> np.ndarray:
	"""q_i <- logistic(theta_i + sum_j theta_ij m_j) over the hidden nodes, m_j clamped or current q_j"""
	part.check_topology(model.topology)
	v = as_configuration(model.topology, v)
	return _mean_field(model, part, v[None, :], iters)[0, list(part.hidden)]

def mean_field_posteriors(model:PairwiseModel, part:VariablePartition, data, iters:int=30) -> MeanFieldState:
	"""mean_field_posterior for every datum at once"""
	part.check_topology(model.topology)
	data = as_configurations(model.topology, data)
	return MeanFieldState(part.hidden, _mean_field(model, part, data, iters)[:, list(part.hidden)])

def mf_stats(topology:GraphTopology, part:VariablePartition, v:typing.Sequence[int], q:typing.Sequence[float]) -> StatsVector:
	"""Expected phi under the factorized q: node entries v_i or q_i, edge entries the product of their ends"""
	v = as_configuration(topology, v)
	q = np.asarray(q, dtype=np.float64)
	if q.shape != (len(part.hidden),):
		raise InvalidInputError(f"Expected {len(part.hidden)} hidden marginals, got shape {q.shape}")
	m = v.astype(np.float64)
	m[list(part.hidden)] = q
	return StatsVector(topology.num_nodes, suff_stats_batch(topology, m))

def mean_field_stats(model:PairwiseModel, part:VariablePartition, data:np.ndarray, iters:int) -> np.ndarray:
	"""(B, |V|+|E|) mean-field expected statistics for a batch of data"""
	return suff_stats_batch(model.topology, _mean_field(model, part, data, iters))


def _mean_field_update(state:TrainerState, part:VariablePartition, data:np.ndarray, config:TrainConfig, batch:np.ndarray) -> None:
	state.per_data_means[batch] = mean_field_stats(state.model, part, data[batch], config.mean_field_iters)
	state.refresh_empirical_mean()

def train_mfpcd(model0:PairwiseModel, part:VariablePartition, data, config:TrainConfig, state:typing.Optional[TrainerState]=None, metrics:typing.Optional[io.TextIOBase]=None, checkpoint=None, callback=None, monitor=None) -> typing.Tuple[PairwiseModel, typing.List[MetricsRecord]]:
	"""Mean-field E step (assigned directly, no moving average), persistent-chain M step"""

	part.check_topology(model0.topology)
	data = as_configurations(model0.topology, data)
	config = dataclasses.replace(config, variant=Variant.MFPCD)
	config.validate(len(data))

	if state is None:
		pool = ChainPool.initialize(part, data, 0, config.kernel.num_chains, config.seed)
		state = TrainerState(model0, mean_field_stats(model0, part, data, config.mean_field_iters), pool)
	return run_loop(state, part, data, config, _mean_field_update, metrics=metrics, checkpoint=checkpoint, callback=callback, monitor=monitor)


@dataclasses.dataclass(frozen=True)
class HybridRamp:
	"""Fusion weight lambda(t) of the sampled estimate against the mean-field one

	lambda is 0 before switch_fraction of the run, then ramps linearly to reach 1 at the
	final iteration, or holds fixed_weight when that is set.
	"""

	switch_fraction:float = 0.5
	fixed_weight:typing.Optional[float] = None

	def __post_init__(self):
		if not 0 <= self.switch_fraction <= 1:
			raise InvalidInputError("switch_fraction must lie in [0, 1]")
		if self.fixed_weight is not None and not 0 <= self.fixed_weight <= 1:
			raise InvalidInputError("fixed_weight must lie in [0, 1]")

	def switch_iteration(self, total:int) -> int:
		return math.floor(self.switch_fraction * total)

	def weight(self, t:int, total:int) -> float:
		start = self.switch_iteration(total)
		if t < start:
			return 0.0
		if self.fixed_weight is not None:
			return float(self.fixed_weight)
		return min(1.0, (t - start + 1) / max(1, total - start))

def train_hapcd(model0:PairwiseModel, part:VariablePartition, data, config:TrainConfig, ramp:typing.Optional[HybridRamp]=None, state:typing.Optional[TrainerState]=None, metrics:typing.Optional[io.TextIOBase]=None, checkpoint=None, callback=None, monitor=None) -> typing.Tuple[PairwiseModel, typing.List[MetricsRecord]]:
	"""Per-data means are (1 - lambda) * mean-field means + lambda * APCD moving-average means

	Both estimators are kept up to date at every iteration.
	"""

	part.check_topology(model0.topology)
	data = as_configurations(model0.topology, data)
	config = dataclasses.replace(config, variant=Variant.HAPCD)
	config.validate(len(data))
	if ramp is None:
		ramp = HybridRamp(config.switch_fraction, config.hybrid_weight)

	def update(state:TrainerState, part:VariablePartition, data:np.ndarray, config:TrainConfig, batch:np.ndarray) -> dict:
		weight = ramp.weight(state.t, config.iterations)
		sampled_mean_update(state, state.chain_means, part, data, config, batch)
		state.mean_field_means = mean_field_stats(state.model, part, data[batch], config.mean_field_iters)
		state.per_data_means[batch] = (1.0 - weight) * state.mean_field_means + weight * state.chain_means[batch]
		state.refresh_empirical_mean()
		return {"hybrid_weight": weight}

	if state is None:
		pool = ChainPool.initialize(part, data, config.e_kernel_params.num_chains, config.kernel.num_chains, config.seed)
		sampled = chain_averages(pool, model0, np.arange(len(data)))
		weight = ramp.weight(0, config.iterations)
		fused = (1.0 - weight) * mean_field_stats(model0, part, data, config.mean_field_iters) + weight * sampled
		state = TrainerState(model0, fused, pool, chain_means=sampled)
	elif state.chain_means is None:
		raise InvalidInputError("Resuming the hybrid variant needs the sampled per-data means")

	return run_loop(state, part, data, config, update, metrics=metrics, checkpoint=checkpoint, callback=callback, monitor=monitor)


def fit_mean_parameters(model:PairwiseModel, target:np.ndarray, tol:float=1e-8, step:float=1.0, max_iters:int=100000, limit:int=ENUMERATION_LIMIT) -> PairwiseModel:
	"""Maximize <theta, target> - A(theta) by fixed-step gradient ascent, halving the step on non-improvement

	Stops once |target - mu(theta)| < tol.
	"""

	target = np.asarray(target, dtype=np.float64)
	topology = model.topology
	theta = model.parameters
	value = theta @ target - exact_log_partition(model, limit)
	gradient = target - exact_mean_params(model, limit).values

	for _ in range(max_iters):
		if np.linalg.norm(gradient) < tol:
			break
		while step > 1e-12:
			candidate = PairwiseModel.from_parameters(topology, theta + step * gradient)
			candidate_value = candidate.parameters @ target - exact_log_partition(candidate, limit)
			if candidate_value >= value:
				theta, value = candidate.parameters, candidate_value
				gradient = target - exact_mean_params(candidate, limit).values
				break
			step /= 2
		else:
			logger.warning("Moment fitting stalled at gradient norm %.3g", np.linalg.norm(gradient))
			break

	return PairwiseModel.from_parameters(topology, theta)

def train_exact_em(model0:PairwiseModel, part:VariablePartition, data, max_outer:int=200, inner_tol:float=1e-8, limit:int=ENUMERATION_LIMIT, callback=None, first_iteration:int=0) -> typing.Tuple[PairwiseModel, typing.List[MetricsRecord]]:
	"""EM with the exact posterior in the E step and a converged exact-moment M step

	Stops when the marginal log-likelihood improves by less than 1e-9, or after max_outer iterations.
	Records are numbered from first_iteration + 1, so a run resumed from a saved model
	continues its trace.
	"""

	part.check_topology(model0.topology)
	data = as_configurations(model0.topology, data)
	if not len(data):
		raise InvalidInputError("Dataset is empty")

	model = model0
	loglik = exact_marginal_loglik(model, part, data, limit)
	trace = []

	for outer in range(max_outer):
		target = np.mean([exact_posterior_mean(model, part, v, limit).values for v in data], axis=0)
		model = fit_mean_parameters(model, target, tol=inner_tol, limit=limit)

		improved = exact_marginal_loglik(model, part, data, limit)
		record = MetricsRecord(
			iteration = first_iteration + outer + 1,
			variant = Variant.EXACT_EM.value,
			exact_loglik = improved,
			exact_grad_norm = float(np.linalg.norm(exact_gradient_mmle(model, part, data, limit).values))
		)
		trace.append(record)
		logger.info("exact-em iteration %d: loglik=%.10f grad=%.3g", record.iteration, improved, record.exact_grad_norm)
		if callback is not None:
			callback(model, record)

		change, loglik = improved - loglik, improved
		if change < 1e-9:
			break

	return model, trace
