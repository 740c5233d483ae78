import dataclasses
import numpy as np
import pytest
from apcd import (
	KernelParams, ScheduleSpec, InvalidInputError, TrainConfig, Checkpoint, CHECKPOINT_HEADER,
	initial_state, train, train_mfpcd, train_hapcd
)

TRAINERS = {"apcd": train, "mfpcd": train_mfpcd, "hapcd": train_hapcd}

def resume_config(**changes) -> TrainConfig:
	config = TrainConfig(
		kernel = KernelParams(2, 10),
		a = ScheduleSpec.power_law(1.0, 2/3),
		b = ScheduleSpec.power_law(0.5, 1.0),
		iterations = 25,
		batch_size = 5,
		seed = 11,
		log_interval = 5,
		checkpoint_interval = 10,
	)
	return dataclasses.replace(config, **changes)

def snapshot(state, config:TrainConfig, variant:str="apcd") -> Checkpoint:
	return Checkpoint.from_state(state, variant, "0" * 64, config.seed, config.a, config.b)


class TestFormat:

	def test_text_round_trip(self, square, square_data):
		model, part = square
		config = resume_config()
		text = str(snapshot(initial_state(model, part, square_data, config), config))
		restored = Checkpoint.from_string(text)
		assert str(restored) == text
		assert restored.model == model
		assert restored.iteration == 0

	def test_restore_keeps_state(self, square, square_data):
		model, part = square
		config = resume_config()
		state = initial_state(model, part, square_data, config)
		restored = Checkpoint.from_string(str(snapshot(state, config))).restore()
		assert restored.pool == state.pool
		np.testing.assert_array_equal(restored.per_data_means, state.per_data_means)
		assert restored.chain_means is None

	def test_header(self, square, square_data):
		model, part = square
		config = resume_config()
		text = str(snapshot(initial_state(model, part, square_data, config), config))
		assert text.startswith(CHECKPOINT_HEADER + "\n")
		with pytest.raises(InvalidInputError, match="header"):
			Checkpoint.from_string("apcd-checkpoint v0\n" + text.split("\n", 1)[1])

	@pytest.mark.parametrize("keyword", ["iteration", "seed", "m-chains"])
	def test_missing_scalar(self, square, square_data, keyword):
		model, part = square
		config = resume_config()
		lines = str(snapshot(initial_state(model, part, square_data, config), config)).splitlines()
		with pytest.raises(InvalidInputError, match=keyword):
			Checkpoint.from_string("\n".join(line for line in lines if not line.startswith(keyword + " ")))

	def test_missing_chain(self, square, square_data):
		model, part = square
		config = resume_config()
		lines = str(snapshot(initial_state(model, part, square_data, config), config)).splitlines()
		lines.remove(next(line for line in lines if line.startswith("m-chain 3 ")))
		with pytest.raises(InvalidInputError, match="m-chain"):
			Checkpoint.from_string("\n".join(lines))

	def test_unterminated_model(self, square, square_data):
		model, part = square
		config = resume_config()
		lines = str(snapshot(initial_state(model, part, square_data, config), config)).splitlines()
		lines.remove("end model")
		with pytest.raises(InvalidInputError):
			Checkpoint.from_string("\n".join(lines))

	def test_save_and_load(self, tmp_path, square, square_data):
		model, part = square
		config = resume_config()
		checkpoint = snapshot(initial_state(model, part, square_data, config), config)
		path = tmp_path / "checkpoint.txt"
		checkpoint.save(str(path))
		checkpoint.save(str(path))
		assert str(Checkpoint.load(str(path))) == str(checkpoint)
		assert [p.name for p in tmp_path.iterdir()] == ["checkpoint.txt"]


class TestResume:

	@pytest.mark.parametrize("variant", sorted(TRAINERS))
	def test_resume_matches_uninterrupted(self, square, square_data, variant):
		model, part = square
		config = resume_config()
		trainer = TRAINERS[variant]
		saved = {}

		def keep(state):
			saved[state.t] = str(snapshot(state, config, variant))

		final, trace = trainer(model.scaled(0.0), part, square_data, config, checkpoint=keep)
		assert sorted(saved) == [10, 20, 25]

		restored = Checkpoint.from_string(saved[10])
		assert restored.iteration == 10
		resumed, resumed_trace = trainer(model.scaled(0.0), part, square_data, config, state=restored.restore())

		assert resumed == final
		assert [record.comparable() for record in resumed_trace] == [record.comparable() for record in trace if record.iteration > 10]

	def test_hybrid_keeps_sampled_means(self, square, square_data):
		model, part = square
		config = resume_config(iterations=10)
		saved = []
		train_hapcd(model.scaled(0.0), part, square_data, config, checkpoint=lambda state: saved.append(str(snapshot(state, config, "hapcd"))))
		restored = Checkpoint.from_string(saved[-1])
		assert restored.chain_means is not None
		assert restored.chain_means.shape == restored.per_data_means.shape

	def test_mean_field_pool_has_no_clamped_chains(self, square, square_data):
		model, part = square
		config = resume_config(iterations=10)
		saved = []
		train_mfpcd(model.scaled(0.0), part, square_data, config, checkpoint=lambda state: saved.append(str(snapshot(state, config, "mfpcd"))))
		restored = Checkpoint.from_string(saved[-1])
		assert restored.pool.num_e_chains == 0
		assert "e-chains 0" in saved[-1].splitlines()
