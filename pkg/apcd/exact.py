"""Brute-force enumeration oracles for small models

Every function here sums over all 2^k states of the free variables and refuses
(with a CapacityError) rather than truncating when k exceeds the limit.
"""

import functools, typing
import numpy as np
from scipy.special import logsumexp
from .errors import CapacityError, InvalidInputError
from .topology import VariablePartition, as_configuration, as_configurations
from .stats import StatsVector
from .model import PairwiseModel

__all__ = [
	"ENUMERATION_LIMIT", "all_configurations", "exact_log_partition", "exact_distribution", "exact_mean_params",
	"exact_posterior_mean", "exact_log_marginal", "exact_marginal_loglik", "exact_gradient_mmle"
]

ENUMERATION_LIMIT = 20

def _check_capacity(count:int, limit:int):
	if count > limit:
		raise CapacityError(count, limit)

@functools.lru_cache(maxsize=8)
def all_configurations(num_vars:int) -> np.ndarray:
	"""Every binary vector of the given length; row s has variable k equal to bit k of s"""
	states = (np.arange(2 ** num_vars)[:, None] >> np.arange(num_vars)) & 1
	states = states.astype(np.uint8)
	states.flags.writeable = False
	return states

def _expected_stats(model:PairwiseModel, states:np.ndarray, log_weights:np.ndarray) -> np.ndarray:
	"""Average of phi over states weighted by normalized exp(log_weights)"""
	probabilities = np.exp(log_weights - logsumexp(log_weights))
	ends = model.topology.edge_array
	nodes = probabilities @ states
	edges = probabilities @ (states[:, ends[:,0]] & states[:, ends[:,1]])
	return np.concatenate([nodes, edges])

def _clamped_states(model:PairwiseModel, part:VariablePartition, v:np.ndarray) -> np.ndarray:
	"""All completions of the visible assignment v over the hidden nodes"""
	hidden = list(part.hidden)
	states = np.repeat(v[None, :], 2 ** len(hidden), axis=0)
	states[:, hidden] = all_configurations(len(hidden))
	return states

def _energies(model:PairwiseModel, states:np.ndarray) -> np.ndarray:
	"""<theta, phi(x)> per row without materializing the statistics matrix"""
	ends = model.topology.edge_array
	energies = states @ model.node_bias
	if len(ends):
		energies = energies + (states[:, ends[:,0]] & states[:, ends[:,1]]) @ model.edge_weight
	return energies

def exact_log_partition(model:PairwiseModel, limit:int=ENUMERATION_LIMIT) -> float:
	"""A(theta) = log sum_x exp<theta, phi(x)>"""
	_check_capacity(model.num_nodes, limit)
	return float(logsumexp(_energies(model, all_configurations(model.num_nodes))))

def exact_distribution(model:PairwiseModel, limit:int=ENUMERATION_LIMIT) -> np.ndarray:
	"""p_theta over all configurations, indexed like all_configurations"""
	_check_capacity(model.num_nodes, limit)
	energies = _energies(model, all_configurations(model.num_nodes))
	return np.exp(energies - logsumexp(energies))

def exact_mean_params(model:PairwiseModel, limit:int=ENUMERATION_LIMIT) -> StatsVector:
	"""mu = E_theta[phi(X)], the gradient of A"""
	_check_capacity(model.num_nodes, limit)
	states = all_configurations(model.num_nodes)
	return StatsVector(model.num_nodes, _expected_stats(model, states, _energies(model, states)))

def exact_posterior_mean(model:PairwiseModel, part:VariablePartition, v:typing.Sequence[int], limit:int=ENUMERATION_LIMIT) -> StatsVector:
	"""sum_h phi(v, h) p_theta(h | v); hidden entries of v are ignored"""
	part.check_topology(model.topology)
	_check_capacity(len(part.hidden), limit)
	v = as_configuration(model.topology, v)
	states = _clamped_states(model, part, v)
	means = _expected_stats(model, states, _energies(model, states))

	# Clamped coordinates are exact, not probability-weighted sums
	visible = np.zeros(model.num_nodes, dtype=bool)
	visible[list(part.visible)] = True
	ends = model.topology.edge_array
	means[:model.num_nodes][visible] = v[visible]
	both = visible[ends[:,0]] & visible[ends[:,1]] if len(ends) else np.zeros(0, dtype=bool)
	means[model.num_nodes:][both] = (v[ends[:,0]] * v[ends[:,1]])[both]
	return StatsVector(model.num_nodes, means)

def exact_log_marginal(model:PairwiseModel, part:VariablePartition, v:typing.Sequence[int], limit:int=ENUMERATION_LIMIT) -> float:
	"""log sum_h exp<theta, phi(v, h)>, the clamped log-normalizer"""
	part.check_topology(model.topology)
	_check_capacity(len(part.hidden), limit)
	v = as_configuration(model.topology, v)
	return float(logsumexp(_energies(model, _clamped_states(model, part, v))))

def _check_data(model:PairwiseModel, data) -> np.ndarray:
	data = as_configurations(model.topology, data)
	if not len(data):
		raise InvalidInputError("Dataset is empty")
	return data

def exact_marginal_loglik(model:PairwiseModel, part:VariablePartition, data, limit:int=ENUMERATION_LIMIT) -> float:
	"""(1/N) sum_n log p_theta(v^n)"""
	data = _check_data(model, data)
	log_z = exact_log_partition(model, limit)
	return float(np.mean([exact_log_marginal(model, part, v, limit) for v in data]) - log_z)

def exact_gradient_mmle(model:PairwiseModel, part:VariablePartition, data, limit:int=ENUMERATION_LIMIT) -> StatsVector:
	"""d l(theta; v) / d theta = average posterior mean minus model mean"""
	data = _check_data(model, data)
	posterior = np.mean([exact_posterior_mean(model, part, v, limit).values for v in data], axis=0)
	return StatsVector(model.num_nodes, posterior - exact_mean_params(model, limit).values)
