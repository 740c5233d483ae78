"""Model quality measures: Parzen window log-likelihood, AIS log-partition estimates and stationarity"""

import dataclasses, json, logging, math, typing, io
import numpy as np
from scipy.special import logsumexp
from .errors import InvalidInputError
from .topology import VariablePartition, as_configuration, as_configurations
from .model import PairwiseModel, log_unnormalized, log_unnormalized_batch
from .exact import ENUMERATION_LIMIT, exact_gradient_mmle, exact_log_partition, exact_marginal_loglik
from .sampler import chain_stream, run_sweeps
from .synth import generate_samples

__all__ = [
	"DEFAULT_SIGMA_GRID", "ParzenEstimator", "parzen_log_density", "parzen_log_densities", "parzen_avg_loglik", "parzen_select_sigma",
	"AisPlan", "AisResult", "ais_log_partition", "ais_log_marginal", "ais_test_loglik",
	"StationarityReport", "stationarity_report", "EvaluationReport", "evaluate", "ParzenMonitor"
]

logger = logging.getLogger(__name__)

DEFAULT_SIGMA_GRID = tuple(round(0.1 * k, 1) for k in range(1, 11))

# Log-weight variance above which an AIS estimate is flagged
WEIGHT_VARIANCE_WARNING = 1.0


class ParzenEstimator:
	"""Isotropic Gaussian kernel density over a fixed set of reference samples"""

	def __init__(self, samples:typing.Sequence[typing.Sequence[float]], sigma:float):

		self._samples = np.array(samples, dtype=np.float64)
		if self._samples.ndim != 2 or not len(self._samples):
			raise InvalidInputError("A Parzen estimator needs a non-empty (S, D) array of reference samples")
		if not sigma > 0 or not math.isfinite(sigma):
			raise InvalidInputError(f"Parzen bandwidth must be positive ({sigma} given)")
		self._sigma = float(sigma)
		self._samples.flags.writeable = False
		self._square_norms = (self._samples ** 2).sum(axis=1)

	@property
	def samples(self) -> np.ndarray:
		return self._samples

	@property
	def sigma(self) -> float:
		return self._sigma

	@property
	def dimension(self) -> int:
		return self._samples.shape[1]

	def __repr__(self) -> str:
		return f"<{self.__class__.__name__} samples={len(self._samples)} dimension={self.dimension} sigma={self._sigma}>"


def parzen_log_densities(est:ParzenEstimator, points:typing.Sequence[typing.Sequence[float]]) -> np.ndarray:
	"""log[(1/S) sum_s exp(-|x-s|^2 / 2 sigma^2)] - (D/2) log(2 pi sigma^2) for each row x"""

	points = np.array(points, dtype=np.float64)
	if points.ndim != 2 or points.shape[1] != est.dimension:
		raise InvalidInputError(f"Points of shape {points.shape} do not match the {est.dimension}-dimensional estimator")

	distances = (points ** 2).sum(axis=1)[:, None] + est._square_norms[None, :] - 2.0 * points @ est.samples.T
	np.maximum(distances, 0.0, out=distances)
	kernel = logsumexp(-distances / (2.0 * est.sigma ** 2), axis=1) - np.log(len(est.samples))
	return kernel - 0.5 * est.dimension * np.log(2.0 * np.pi * est.sigma ** 2)

def parzen_log_density(est:ParzenEstimator, x:typing.Sequence[float]) -> float:
	x = np.asarray(x, dtype=np.float64)
	if x.ndim != 1:
		raise InvalidInputError("Expected a single point")
	return float(parzen_log_densities(est, x[None, :])[0])

def parzen_avg_loglik(est:ParzenEstimator, testset:typing.Sequence[typing.Sequence[float]]) -> typing.Tuple[float, float]:
	"""Mean and standard error of the Parzen log-density over the testset

	The standard error is the population standard deviation over sqrt(n).
	Sums are exactly rounded so the result does not depend on test order.
	"""

	if not len(testset):
		raise InvalidInputError("Test set is empty")
	values = parzen_log_densities(est, testset)
	mean = math.fsum(values) / len(values)
	sem = math.sqrt(math.fsum((values - mean) ** 2) / len(values)) / math.sqrt(len(values))
	return mean, sem

def parzen_select_sigma(samples, validation, sigma_grid:typing.Iterable[float]=DEFAULT_SIGMA_GRID) -> float:
	"""The grid bandwidth maximizing the validation log-likelihood; ties go to the smaller sigma"""

	grid = sorted(set(float(sigma) for sigma in sigma_grid))
	if not grid:
		raise InvalidInputError("Bandwidth grid is empty")

	best, best_score = None, -math.inf
	for sigma in grid:
		score, _ = parzen_avg_loglik(ParzenEstimator(samples, sigma), validation)
		logger.debug("Parzen sigma=%g: validation loglik %.6f", sigma, score)
		if best is None or score > best_score:
			best, best_score = sigma, score
	return best


@dataclasses.dataclass(frozen=True)
class AisPlan:
	"""Inverse-temperature ladder 0 = beta_0 < ... < beta_K = 1, chain count and sweeps per temperature"""

	betas:typing.Tuple[float, ...]
	num_chains:int = 100
	sweeps:int = 1

	def __post_init__(self):
		betas = tuple(float(beta) for beta in self.betas)
		object.__setattr__(self, "betas", betas)
		if len(betas) < 2 or betas[0] != 0.0 or betas[-1] != 1.0:
			raise InvalidInputError("The temperature ladder must run from 0 to 1")
		if any(hi <= lo for lo, hi in zip(betas[:-1], betas[1:])):
			raise InvalidInputError("The temperature ladder must be strictly increasing")
		if int(self.num_chains) < 1 or int(self.sweeps) < 1:
			raise InvalidInputError("AIS needs at least one chain and one sweep per temperature")

	@classmethod
	def uniform(cls, steps:int=1000, num_chains:int=100, sweeps:int=1) -> "AisPlan":
		if int(steps) < 1:
			raise InvalidInputError("AIS needs at least one step")
		betas = np.linspace(0.0, 1.0, int(steps) + 1)
		betas[-1] = 1.0
		return cls(tuple(betas), num_chains, sweeps)

	@classmethod
	def geometric(cls, steps:int=1000, num_chains:int=100, sweeps:int=1, smallest:float=1e-4) -> "AisPlan":
		"""beta_0 = 0 followed by `steps` geometrically spaced temperatures from `smallest` to 1"""
		if int(steps) < 1:
			raise InvalidInputError("AIS needs at least one step")
		if int(steps) == 1:
			return cls((0.0, 1.0), num_chains, sweeps)
		betas = np.geomspace(smallest, 1.0, int(steps))
		betas[-1] = 1.0
		return cls((0.0,) + tuple(betas), num_chains, sweeps)

	@property
	def steps(self) -> int:
		return len(self.betas) - 1


@dataclasses.dataclass
class AisResult:
	"""A log-normalizer estimate with its per-chain log importance weights"""

	log_z:float
	log_weights:np.ndarray

	@property
	def weight_variance(self) -> float:
		return float(np.var(self.log_weights))

	@property
	def high_variance(self) -> bool:
		return self.weight_variance > WEIGHT_VARIANCE_WARNING


def _anneal(model:PairwiseModel, states:np.ndarray, nodes:typing.Sequence[int], plan:AisPlan, seed:int, stream_index:int, workers:int) -> np.ndarray:
	"""Per-chain log weights of annealing `states` (uniform over `nodes`) towards the model"""

	streams = [chain_stream(seed, "ais", stream_index, c) for c in range(len(states))]
	for c, stream in enumerate(streams):
		states[c, list(nodes)] = stream.integers(0, 2, size=len(nodes))

	log_weights = np.zeros(len(states))
	for k in range(1, len(plan.betas)):
		log_weights += (plan.betas[k] - plan.betas[k-1]) * log_unnormalized_batch(model, states)
		if k < plan.steps:
			run_sweeps(model.scaled(plan.betas[k]), states, streams, plan.sweeps, nodes=nodes, workers=workers)
	return log_weights

def _combine(log_weights:np.ndarray, num_free:int) -> AisResult:
	log_z = num_free * np.log(2.0) + logsumexp(log_weights) - np.log(len(log_weights))
	result = AisResult(float(log_z), log_weights)
	if result.high_variance:
		logger.warning("AIS log-weight variance %.3g is high; the estimate may be unreliable", result.weight_variance)
	return result

def ais_log_partition(model:PairwiseModel, plan:AisPlan, seed:int=0, workers:int=1) -> AisResult:
	"""Estimate A(theta) by annealing from the uniform distribution (log Z_0 = |V| log 2)"""
	states = np.zeros((plan.num_chains, model.num_nodes), dtype=np.uint8)
	log_weights = _anneal(model, states, range(model.num_nodes), plan, seed, 0, workers)
	return _combine(log_weights, model.num_nodes)

def ais_log_marginal(model:PairwiseModel, part:VariablePartition, v:typing.Sequence[int], plan:AisPlan, seed:int=0, workers:int=1) -> AisResult:
	"""Estimate log sum_h exp<theta, phi(v, h)> by annealing over the hidden nodes only

	Every datum uses the same chain streams. Without hidden nodes the sum has one term and is returned exactly.
	"""

	part.check_topology(model.topology)
	v = as_configuration(model.topology, v)
	if not part.hidden:
		return AisResult(log_unnormalized(model, v), np.zeros(1))
	states = np.repeat(v[None, :], plan.num_chains, axis=0)
	log_weights = _anneal(model, states, part.hidden, plan, seed, 1, workers)
	return _combine(log_weights, len(part.hidden))

def ais_test_loglik(model:PairwiseModel, part:VariablePartition, testset, plan:AisPlan, seed:int=0, log_z:typing.Optional[float]=None, workers:int=1) -> np.ndarray:
	"""Per-datum estimates of log p_theta(v): the clamped AIS estimate minus the global log Z estimate"""

	testset = as_configurations(model.topology, testset)
	if not len(testset):
		raise InvalidInputError("Test set is empty")
	if log_z is None:
		log_z = ais_log_partition(model, plan, seed, workers).log_z
	return np.array([ais_log_marginal(model, part, v, plan, seed, workers).log_z - log_z for v in testset])


@dataclasses.dataclass(frozen=True)
class StationarityReport:
	"""Norm of the exact marginal-likelihood gradient, overall and per parameter block"""

	grad_norm:float
	node_norm:float
	edge_norm:float

def stationarity_report(model:PairwiseModel, part:VariablePartition, data, limit:int=ENUMERATION_LIMIT) -> StationarityReport:
	gradient = exact_gradient_mmle(model, part, data, limit)
	return StationarityReport(
		grad_norm = float(np.linalg.norm(gradient.values)),
		node_norm = float(np.linalg.norm(gradient.node_part)),
		edge_norm = float(np.linalg.norm(gradient.edge_part))
	)


@dataclasses.dataclass
class EvaluationReport:
	"""Everything cmd eval measures for one trained model"""

	parzen_mean:float
	parzen_sem:float
	sigma:float
	ais_log_z:typing.Optional[float] = None
	ais_weight_var:typing.Optional[float] = None
	ais_test_loglik:typing.Optional[float] = None
	exact_log_z:typing.Optional[float] = None
	exact_loglik:typing.Optional[float] = None
	grad_norm:typing.Optional[float] = None
	true_parzen_mean:typing.Optional[float] = None
	true_parzen_sem:typing.Optional[float] = None
	true_sigma:typing.Optional[float] = None
	config_digest:typing.Optional[str] = None
	seed:typing.Optional[int] = None

	def to_json(self) -> str:
		return json.dumps({key: value for key, value in dataclasses.asdict(self).items() if value is not None}, indent="\t")

	def write(self, file:io.TextIOBase):
		print(self.to_json(), file=file)

	@classmethod
	def from_file(cls, file:io.TextIOBase) -> "EvaluationReport":
		try:
			return cls(**json.load(file))
		except (ValueError, TypeError) as e:
			raise InvalidInputError(f"Malformed evaluation report: {e}") from None


def _split_validation(rows:np.ndarray, validation_fraction:float) -> typing.Tuple[np.ndarray, np.ndarray]:
	"""The first floor(fraction * N) rows (at least one) and the rest"""
	if not 0 < validation_fraction < 1:
		raise InvalidInputError("validation_fraction must lie in (0, 1)")
	held_out = max(1, math.floor(validation_fraction * len(rows)))
	if held_out >= len(rows):
		raise InvalidInputError(f"A training set of {len(rows)} cannot spare {held_out} points for validation")
	return rows[:held_out], rows[held_out:]

def evaluate(model:PairwiseModel, part:VariablePartition, samples, train, test, sigma_grid:typing.Iterable[float]=DEFAULT_SIGMA_GRID, validation_fraction:float=0.2, plan:typing.Optional[AisPlan]=None, seed:int=0, exact_limit:int=ENUMERATION_LIMIT, ais_test:typing.Optional[bool]=None, workers:int=1) -> EvaluationReport:
	"""Score a model by its samples and, where feasible, by AIS and exact enumeration

	Parzen scores use visible coordinates only. The bandwidth is cross-validated
	on the first validation_fraction of the training set; the remainder of the
	training set serves as the reference samples of the "True" row.
	"""

	topology = model.topology
	part.check_topology(topology)
	samples, train, test = (as_configurations(topology, rows) for rows in (samples, train, test))
	if not len(test):
		raise InvalidInputError("Test set is empty")
	visible = list(part.visible)
	validation, reference = _split_validation(train[:, visible], validation_fraction)

	sigma = parzen_select_sigma(samples[:, visible], validation, sigma_grid)
	parzen_mean, parzen_sem = parzen_avg_loglik(ParzenEstimator(samples[:, visible], sigma), test[:, visible])
	true_sigma = parzen_select_sigma(reference, validation, sigma_grid)
	true_mean, true_sem = parzen_avg_loglik(ParzenEstimator(reference, true_sigma), test[:, visible])
	logger.info("Parzen test loglik %.4f +/- %.4f (sigma=%g); training-set reference %.4f +/- %.4f", parzen_mean, parzen_sem, sigma, true_mean, true_sem)

	report = EvaluationReport(parzen_mean, parzen_sem, sigma, true_parzen_mean=true_mean, true_parzen_sem=true_sem, true_sigma=true_sigma)

	if plan is not None:
		result = ais_log_partition(model, plan, seed, workers)
		report.ais_log_z, report.ais_weight_var = result.log_z, result.weight_variance
		if ais_test is None:
			ais_test = len(part.hidden) <= exact_limit
		if ais_test:
			report.ais_test_loglik = float(np.mean(ais_test_loglik(model, part, test, plan, seed, result.log_z, workers)))
		logger.info("AIS log Z %.4f (log-weight variance %.3g)", result.log_z, result.weight_variance)

	if model.num_nodes <= exact_limit:
		report.exact_log_z = exact_log_partition(model, exact_limit)
		report.exact_loglik = exact_marginal_loglik(model, part, test, exact_limit)
		report.grad_norm = stationarity_report(model, part, train, exact_limit).grad_norm
		logger.info("Exact test loglik %.6f, training gradient norm %.3g", report.exact_loglik, report.grad_norm)

	return report


class ParzenMonitor:
	"""Parzen test log-likelihood of freshly drawn model samples, scored at every record of a training run

	Every call draws from the same streams, so successive scores differ only through the model.
	"""

	def __init__(self, part:VariablePartition, train, test, num_samples:int, sweeps:int, seed:int, sigma_grid:typing.Iterable[float]=DEFAULT_SIGMA_GRID, validation_fraction:float=0.2, workers:int=1):

		visible = list(part.visible)
		train, test = np.asarray(train, dtype=np.uint8), np.asarray(test, dtype=np.uint8)
		if not len(test):
			raise InvalidInputError("Test set is empty")
		if int(num_samples) < 1:
			raise InvalidInputError("The monitor needs at least one model sample")

		self._visible = visible
		self._validation, _ = _split_validation(train[:, visible], validation_fraction)
		self._test = test[:, visible]
		self._num_samples = int(num_samples)
		self._sweeps = int(sweeps)
		self._seed = int(seed)
		self._sigma_grid = tuple(sigma_grid)
		self._workers = workers

	@property
	def num_samples(self) -> int:
		return self._num_samples

	def __call__(self, model:PairwiseModel) -> typing.Tuple[float, float]:
		samples = generate_samples(model, self._num_samples, self._sweeps, self._seed, self._workers)[:, self._visible]
		sigma = parzen_select_sigma(samples, self._validation, self._sigma_grid)
		return parzen_avg_loglik(ParzenEstimator(samples, sigma), self._test)

	def __repr__(self) -> str:
		return f"<{self.__class__.__name__} samples={self._num_samples} test={len(self._test)}>"
