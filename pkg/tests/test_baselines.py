import dataclasses
import numpy as np
import pytest
from scipy.special import expit
from apcd import (
	GraphTopology, VariablePartition, PairwiseModel, KernelParams, InvalidInputError, TrainConfig, ScheduleSpec,
	MeanFieldState, mean_field_posterior, mean_field_posteriors, mf_stats, HybridRamp,
	train, train_mfpcd, train_hapcd, train_exact_em, fit_mean_parameters,
	exact_posterior_mean, exact_mean_params, exact_marginal_loglik
)
from conftest import random_model, random_partition, exact_samples


def quick_config(**changes) -> TrainConfig:
	config = TrainConfig(kernel=KernelParams(2, 20), iterations=30, seed=5, log_interval=5)
	return dataclasses.replace(config, **changes)

def numeric(trace) -> list:
	return [(r.iteration, r.a, r.b, r.grad_norm_estimate, r.exact_loglik, r.exact_grad_norm) for r in trace]


class TestMeanField:

	@pytest.fixture
	def bipartite(self):
		"""Hidden nodes 2 and 3 each touch visible nodes only"""
		topology = GraphTopology(4, [(0, 1), (0, 2), (1, 2), (1, 3)])
		return PairwiseModel(topology, [0.2, -0.4, 0.7, -1.1], [0.5, 1.3, -0.8, 0.9]), VariablePartition(4, [2, 3])

	def test_exact_when_posterior_factorizes(self, bipartite):
		model, part = bipartite
		for v in ([0, 0, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0]):
			q = mean_field_posterior(model, part, v)
			posterior = exact_posterior_mean(model, part, v)
			np.testing.assert_allclose(q, posterior.node_part[[2, 3]], atol=1e-12)
			np.testing.assert_allclose(mf_stats(model.topology, part, v, q).values, posterior.values, atol=1e-12)

	def test_single_update(self, bipartite):
		model, part = bipartite
		q = mean_field_posterior(model, part, [1, 1, 0, 0], iters=1)
		np.testing.assert_allclose(q, [expit(0.7 + 1.3 - 0.8), expit(-1.1 + 0.9)])

	def test_no_iterations_is_uniform(self, bipartite):
		model, part = bipartite
		assert mean_field_posterior(model, part, [1, 0, 0, 0], iters=0).tolist() == [0.5, 0.5]

	def test_batched_matches_single(self, rng):
		model = random_model(rng, 7)
		part = random_partition(rng, 7)
		data = rng.integers(0, 2, (5, 7))
		state = mean_field_posteriors(model, part, data, iters=10)
		assert state.marginals.shape == (5, len(part.hidden))
		for n, v in enumerate(data):
			np.testing.assert_array_equal(state.marginals[n], mean_field_posterior(model, part, v, iters=10))

	def test_stats_products(self):
		topology = GraphTopology(3, [(0, 1), (1, 2)])
		stats = mf_stats(topology, VariablePartition(3, [2]), [1, 1, 0], [0.25])
		assert stats.values.tolist() == [1.0, 1.0, 0.25, 1.0, 0.25]

	def test_stats_shape_mismatch(self):
		with pytest.raises(InvalidInputError):
			mf_stats(GraphTopology(3, [(0, 1)]), VariablePartition(3, [2]), [1, 1, 0], [0.2, 0.3])

	def test_state_bounds(self):
		with pytest.raises(InvalidInputError):
			MeanFieldState((1,), [[1.5]])


class TestHybridRamp:

	def test_linear_ramp(self):
		ramp = HybridRamp(0.5)
		assert ramp.weight(0, 100) == 0.0
		assert ramp.weight(49, 100) == 0.0
		assert ramp.weight(50, 100) == pytest.approx(1 / 50)
		assert ramp.weight(74, 100) == pytest.approx(0.5)
		assert ramp.weight(99, 100) == 1.0

	def test_fixed_weight(self):
		assert HybridRamp(0.0, 0.3).weight(0, 10) == 0.3
		assert HybridRamp(0.5, 0.3).weight(2, 10) == 0.0

	def test_bounds(self):
		with pytest.raises(InvalidInputError):
			HybridRamp(1.5)
		with pytest.raises(InvalidInputError):
			HybridRamp(0.5, -0.1)


class TestMfpcd:

	def test_trace_and_variant(self, square, square_data):
		model, part = square
		_, trace = train_mfpcd(PairwiseModel(model.topology), part, square_data, quick_config())
		assert [r.iteration for r in trace] == [5, 10, 15, 20, 25, 30]
		assert all(r.variant == "mfpcd" for r in trace)

	def test_accepts_linear_schedules(self, square, square_data):
		model, part = square
		config = quick_config(a=ScheduleSpec.linear_decay(1, 0.05, 30), b=ScheduleSpec.linear_decay(0.1, 0.01, 30))
		fitted, _ = train_mfpcd(PairwiseModel(model.topology), part, square_data, config)
		assert fitted != PairwiseModel(model.topology)

	def test_deterministic(self, square, square_data):
		model, part = square
		first, _ = train_mfpcd(PairwiseModel(model.topology), part, square_data, quick_config())
		second, _ = train_mfpcd(PairwiseModel(model.topology), part, square_data, quick_config())
		assert first == second


class TestHapcd:

	def test_full_weight_is_apcd(self, square, square_data):
		model, part = square
		start = PairwiseModel(model.topology)
		apcd_model, apcd_trace = train(start, part, square_data, quick_config())
		hybrid_model, hybrid_trace = train_hapcd(start, part, square_data, quick_config(), ramp=HybridRamp(0.0, 1.0))
		assert hybrid_model == apcd_model
		assert numeric(hybrid_trace) == numeric(apcd_trace)
		assert all(r.hybrid_weight == 1.0 and r.variant == "hapcd" for r in hybrid_trace)

	def test_zero_weight_is_mfpcd(self, square, square_data):
		model, part = square
		start = PairwiseModel(model.topology)
		mf_model, mf_trace = train_mfpcd(start, part, square_data, quick_config())
		hybrid_model, hybrid_trace = train_hapcd(start, part, square_data, quick_config(), ramp=HybridRamp(1.0))
		assert hybrid_model == mf_model
		assert numeric(hybrid_trace) == numeric(mf_trace)
		assert all(r.hybrid_weight == 0.0 for r in hybrid_trace)

	def test_midpoint_fuses_evenly(self, square, square_data):
		model, part = square
		checked = []

		def check(state, record):
			expected = 0.5 * state.mean_field_means + 0.5 * state.chain_means
			np.testing.assert_allclose(state.per_data_means, expected)
			checked.append(record.iteration)

		train_hapcd(PairwiseModel(model.topology), part, square_data, quick_config(), ramp=HybridRamp(0.0, 0.5), callback=check)
		assert checked

	def test_ramp_recorded(self, square, square_data):
		model, part = square
		_, trace = train_hapcd(PairwiseModel(model.topology), part, square_data, quick_config(switch_fraction=0.5))
		weights = [r.hybrid_weight for r in trace]
		assert weights[:3] == [0.0, 0.0, 0.0]
		assert weights[-1] == 1.0
		assert weights == sorted(weights)


class TestExactEm:

	def test_fit_mean_parameters(self, square):
		model, _ = square
		target = exact_mean_params(model).values
		fitted = fit_mean_parameters(PairwiseModel(model.topology), target, tol=1e-8)
		assert np.linalg.norm(target - exact_mean_params(fitted).values) < 1e-6

	def test_monotone(self, rng):
		for _ in range(6):
			num_nodes = int(rng.integers(3, 6))
			truth = random_model(rng, num_nodes, scale=0.8)
			part = random_partition(rng, num_nodes)
			data = exact_samples(rng, truth, 15)
			start = PairwiseModel(truth.topology)
			logliks = [exact_marginal_loglik(start, part, data)]
			_, trace = train_exact_em(start, part, data, max_outer=8, inner_tol=1e-6)
			logliks += [r.exact_loglik for r in trace]
			assert all(later >= earlier - 1e-10 for earlier, later in zip(logliks[:-1], logliks[1:]))

	@pytest.mark.slow
	def test_monotone_many_instances(self, rng):
		for _ in range(20):
			num_nodes = int(rng.integers(3, 7))
			truth = random_model(rng, num_nodes)
			part = random_partition(rng, num_nodes)
			data = exact_samples(rng, truth, 30)
			start = PairwiseModel(truth.topology)
			logliks = [exact_marginal_loglik(start, part, data)]
			_, trace = train_exact_em(start, part, data, max_outer=50)
			logliks += [r.exact_loglik for r in trace]
			assert all(later >= earlier - 1e-10 for earlier, later in zip(logliks[:-1], logliks[1:]))

	def test_fully_visible_matches_moments(self, rng):
		topology = GraphTopology(3, [(0, 1), (1, 2)])
		truth = PairwiseModel(topology, [0.3, -0.2, 0.5], [0.6, -0.4])
		data = exact_samples(rng, truth, 40)
		fitted, trace = train_exact_em(PairwiseModel(topology), VariablePartition.all_visible(3), data, inner_tol=1e-9)
		assert trace[-1].exact_grad_norm < 1e-6
		assert trace[-1].variant == "exact-em"

	def test_empty_data(self, square):
		model, part = square
		with pytest.raises(InvalidInputError):
			train_exact_em(model, part, [])
