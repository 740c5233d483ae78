import json, re, statistics
import pytest
from apcd import ApcdError, Checkpoint, ExitStatus, MetricsRecord, Dataset
from apcd import cli
from apcd.cli import main

SMALL_GRID = ["grid_rows=2", "grid_cols=2", "train_count=10", "test_count=6", "sweeps_per_sample=5", "seed=4"]

def settings(*pairs) -> list:
	return [argument for pair in pairs for argument in ("--set", pair)]

def read_metrics(path) -> list:
	return [MetricsRecord.from_json(line).comparable() for line in path.read_text().splitlines() if line.strip()]


@pytest.fixture
def generated(tmp_path):
	out = tmp_path / "data"
	assert main(["generate", "-q"] + settings(*SMALL_GRID, f"output={out}")) == ExitStatus.OK
	return out

def train_settings(generated, out, *extra) -> list:
	return settings(
		f"model={generated / 'model.txt'}", f"data={generated / 'train.txt'}", f"test_data={generated / 'test.txt'}", f"output={out}",
		"iterations=20", "ell=1", "chains=5", "log_interval=5", "checkpoint_interval=10", "seed=4",
		"eval_samples=40", "sweeps_per_sample=3", "ais_steps=20", "ais_chains=5", *extra
	)


class TestValidateSchedule:

	def test_valid_pair(self, capsys):
		assert main(["validate-schedule", "power:c=1,p=2/3", "power:c=1,p=1"]) == ExitStatus.OK
		assert capsys.readouterr().out.startswith("valid-E-fast")

	def test_invalid_pair(self, capsys):
		assert main(["validate-schedule", "power:c=1,p=1", "power:c=2,p=1"]) == ExitStatus.VALIDATION
		assert capsys.readouterr().out.startswith("invalid")

	def test_accepted_for_baselines(self):
		assert main(["validate-schedule", "power:c=1,p=1", "power:c=2,p=1", "--variant", "mfpcd"]) == ExitStatus.OK

	def test_malformed(self):
		assert main(["validate-schedule", "cubic:c=1", "power:c=1,p=1"]) == ExitStatus.INVALID_INPUT


class TestGenerate:

	def test_outputs(self, generated):
		assert {path.name for path in generated.iterdir()} == {"model.txt", "train.txt", "test.txt", "run.json"}
		run = json.loads((generated / "run.json").read_text())
		assert run["train_count"] == 10 and run["test_count"] == 6
		assert len(run["hidden"]) == 2
		assert run["train_digest"] == Dataset.from_string((generated / "train.txt").read_text()).digest

	def test_reproducible(self, tmp_path, generated):
		again = tmp_path / "again"
		assert main(["generate", "-q"] + settings(*SMALL_GRID, f"output={again}")) == ExitStatus.OK
		for name in ("model.txt", "train.txt", "test.txt"):
			assert (again / name).read_bytes() == (generated / name).read_bytes()

	def test_seed_changes_data(self, tmp_path, generated):
		other = tmp_path / "other"
		assert main(["generate", "-q"] + settings(*SMALL_GRID, "seed=5", f"output={other}")) == ExitStatus.OK
		assert (other / "model.txt").read_bytes() != (generated / "model.txt").read_bytes()

	def test_unknown_key(self, tmp_path):
		assert main(["generate", "-q"] + settings("grid_depth=3", f"output={tmp_path}")) == ExitStatus.INVALID_INPUT

	def test_config_file(self, tmp_path, generated):
		config = tmp_path / "grid.conf"
		config.write_text("# small grid\n" + "\n".join(setting.replace("=", " = ", 1) for setting in SMALL_GRID) + f"\noutput = {tmp_path / 'from-file'}\n")
		assert main(["generate", "-q", "--config", str(config)]) == ExitStatus.OK
		assert (tmp_path / "from-file" / "train.txt").read_bytes() == (generated / "train.txt").read_bytes()


class TestTrain:

	def test_apcd(self, tmp_path, generated):
		out = tmp_path / "apcd"
		assert main(["train", "-q"] + train_settings(generated, out)) == ExitStatus.OK
		records = read_metrics(out / "metrics.jsonl")
		assert [record["iteration"] for record in records] == [5, 10, 15, 20]
		assert all(record["exact_loglik"] is not None for record in records)
		assert Checkpoint.load(str(out / "checkpoint.txt")).iteration == 20
		run = json.loads((out / "run.json").read_text())
		assert run["final"]["iteration"] == 20
		assert run["schedule_verdict"].startswith("valid-E-fast")

	def test_rejected_schedules(self, tmp_path, generated):
		out = tmp_path / "bad"
		assert main(["train", "-q"] + train_settings(generated, out, "a=power:c=1,p=1", "b=power:c=1,p=1")) == ExitStatus.VALIDATION
		assert not (out / "metrics.jsonl").exists()

	def test_exact_em(self, tmp_path, generated):
		out = tmp_path / "em"
		assert main(["train", "-q"] + train_settings(generated, out, "variant=exact-em", "max_outer=5")) == ExitStatus.OK
		records = read_metrics(out / "metrics.jsonl")
		assert 1 <= len(records) <= 5
		assert all(record["variant"] == "exact-em" for record in records)
		logliks = [record["exact_loglik"] for record in records]
		assert all(later >= earlier - 1e-9 for earlier, later in zip(logliks, logliks[1:]))

	def test_missing_data(self, tmp_path, generated):
		assert main(["train", "-q"] + settings(f"model={generated / 'model.txt'}", f"output={tmp_path}")) == ExitStatus.INVALID_INPUT

	@pytest.mark.parametrize("variant", ["apcd", "hapcd"])
	def test_resume(self, tmp_path, generated, monkeypatch, variant):
		out = tmp_path / variant
		arguments = ["train", "-q"] + train_settings(generated, out, f"variant={variant}")
		assert main(arguments) == ExitStatus.OK
		model = (out / "model.txt").read_bytes()
		metrics = read_metrics(out / "metrics.jsonl")

		# Rerun, keeping only the checkpoint at iteration 10
		save = Checkpoint.save
		monkeypatch.setattr(Checkpoint, "save", lambda self, path: save(self, path) if self.iteration == 10 else None)
		assert main(arguments) == ExitStatus.OK
		monkeypatch.undo()
		assert Checkpoint.load(str(out / "checkpoint.txt")).iteration == 10

		assert main(arguments + ["--resume"]) == ExitStatus.OK
		assert (out / "model.txt").read_bytes() == model
		assert read_metrics(out / "metrics.jsonl") == metrics

	def test_resume_with_other_config(self, tmp_path, generated):
		out = tmp_path / "apcd"
		assert main(["train", "-q"] + train_settings(generated, out)) == ExitStatus.OK
		assert main(["train", "-q", "--resume"] + train_settings(generated, out, "chains=6")) == ExitStatus.INVALID_INPUT

	def test_resume_with_more_workers(self, tmp_path, generated, monkeypatch):
		out = tmp_path / "apcd"
		arguments = ["train", "-q"] + train_settings(generated, out)
		assert main(arguments) == ExitStatus.OK
		model = (out / "model.txt").read_bytes()
		metrics = read_metrics(out / "metrics.jsonl")

		save = Checkpoint.save
		monkeypatch.setattr(Checkpoint, "save", lambda self, path: save(self, path) if self.iteration == 10 else None)
		assert main(arguments) == ExitStatus.OK
		monkeypatch.undo()

		assert main(arguments + ["--resume", "--set", "workers=2"]) == ExitStatus.OK
		assert (out / "model.txt").read_bytes() == model
		assert read_metrics(out / "metrics.jsonl") == metrics

	def test_exact_em_resume(self, tmp_path, generated, monkeypatch):
		out = tmp_path / "em"
		arguments = ["train", "-q"] + train_settings(generated, out, "variant=exact-em", "max_outer=5")
		assert main(arguments) == ExitStatus.OK
		model = (out / "model.txt").read_bytes()
		metrics = read_metrics(out / "metrics.jsonl")
		assert len(metrics) >= 2
		assert metrics[-1]["iteration"] == len(metrics)

		train_exact_em = cli.train_exact_em
		def interrupted(*args, callback, **kwargs):
			def stop(model, record):
				callback(model, record)
				if record.iteration == 1:
					raise ApcdError("Interrupted")
			return train_exact_em(*args, callback=stop, **kwargs)

		monkeypatch.setattr(cli, "train_exact_em", interrupted)
		assert main(arguments) == ExitStatus.FAILURE
		monkeypatch.undo()
		assert [record["iteration"] for record in read_metrics(out / "metrics.jsonl")] == [1]

		assert main(arguments + ["--resume"]) == ExitStatus.OK
		assert (out / "model.txt").read_bytes() == model
		assert read_metrics(out / "metrics.jsonl") == metrics

	def test_finished_exact_em_resume_adds_nothing(self, tmp_path, generated):
		out = tmp_path / "em"
		arguments = ["train", "-q"] + train_settings(generated, out, "variant=exact-em", "max_outer=3")
		assert main(arguments) == ExitStatus.OK
		metrics = read_metrics(out / "metrics.jsonl")
		assert main(arguments + ["--resume"]) == ExitStatus.OK
		assert read_metrics(out / "metrics.jsonl") == metrics
		assert json.loads((out / "run.json").read_text())["final"] == metrics[-1]

	def test_test_parzen_in_metrics(self, tmp_path, generated):
		out = tmp_path / "monitored"
		assert main(["train", "-q"] + train_settings(generated, out, "monitor_samples=20")) == ExitStatus.OK
		records = read_metrics(out / "metrics.jsonl")
		assert [record["iteration"] for record in records] == [5, 10, 15, 20]
		assert all(record["test_parzen"] is not None and record["test_parzen_sem"] >= 0 for record in records)

		unmonitored = tmp_path / "unmonitored"
		assert main(["train", "-q"] + train_settings(generated, unmonitored)) == ExitStatus.OK
		assert all(record["test_parzen"] is None for record in read_metrics(unmonitored / "metrics.jsonl"))
		assert (unmonitored / "model.txt").read_text().splitlines()[3:] == (out / "model.txt").read_text().splitlines()[3:]


class TestEvalAndReport:

	def test_eval(self, tmp_path, generated, capsys):
		out = tmp_path / "apcd"
		assert main(["train", "-q"] + train_settings(generated, out)) == ExitStatus.OK
		capsys.readouterr()
		assert main(["eval", "-q"] + train_settings(generated, out)) == ExitStatus.OK
		report = json.loads((out / "eval.json").read_text())
		assert json.loads(capsys.readouterr().out) == report
		for key in ("parzen_mean", "parzen_sem", "sigma", "ais_log_z", "exact_log_z", "exact_loglik", "true_parzen_mean", "config_digest"):
			assert key in report
		assert report["parzen_sem"] >= 0
		assert report["exact_loglik"] <= 0

	def test_report(self, tmp_path, generated):
		runs = []
		for variant in ("apcd", "mfpcd"):
			out = tmp_path / variant
			assert main(["train", "-q"] + train_settings(generated, out, f"variant={variant}")) == ExitStatus.OK
			runs.append(str(out))
		table = tmp_path / "table.tsv"
		assert main(["report", "-q", *runs, "--output", str(table)]) == ExitStatus.OK
		lines = table.read_text().splitlines()
		digest = json.loads((tmp_path / "apcd" / "run.json").read_text())["config_digest"]
		assert lines[0] == f"# apcd config-digest {digest} seed 4"
		assert lines[1].startswith("# mfpcd config-digest ")
		assert lines[2] == "iteration\tapcd\tmfpcd"
		assert [line.split("\t")[0] for line in lines[3:7]] == ["5", "10", "15", "20"]
		assert lines[7] == ""
		assert lines[8].split("\t")[-2:] == ["test_parzen", "seconds"]
		assert [line.split("\t")[1] for line in lines[9:]] == ["apcd", "mfpcd"]

	def test_report_rejects_other_experiments(self, tmp_path, generated):
		first, second = tmp_path / "first", tmp_path / "second"
		assert main(["train", "-q"] + train_settings(generated, first)) == ExitStatus.OK
		assert main(["train", "-q"] + train_settings(generated, second, "name=other")) == ExitStatus.OK
		assert main(["report", "-q", str(first), str(second)]) == ExitStatus.INVALID_INPUT


class TestProvenance:

	@staticmethod
	def assert_stamped(directory):
		digest = json.loads((directory / "run.json").read_text())["config_digest"]
		for path in directory.iterdir():
			text = path.read_text()
			assert digest in text, path.name
			assert re.search(r"seed\W+4\b", text), path.name
			if path.suffix == ".jsonl":
				assert all(record["config_digest"] == digest and record["seed"] == 4 for record in read_metrics(path))

	def test_generated_files(self, generated):
		self.assert_stamped(generated)

	@pytest.mark.parametrize("variant", ["apcd", "exact-em"])
	def test_trained_files(self, tmp_path, generated, variant):
		out = tmp_path / variant
		arguments = train_settings(generated, out, f"variant={variant}", "max_outer=3")
		assert main(["train", "-q"] + arguments) == ExitStatus.OK
		assert main(["eval", "-q"] + arguments) == ExitStatus.OK
		self.assert_stamped(out)

	def test_execution_keys_keep_the_digest(self, tmp_path, generated):
		first, second = tmp_path / "first", tmp_path / "second"
		assert main(["train", "-q"] + train_settings(generated, first)) == ExitStatus.OK
		assert main(["train", "-q"] + train_settings(generated, second, "workers=3", "checkpoint_interval=5")) == ExitStatus.OK
		digests = [json.loads((out / "run.json").read_text())["config_digest"] for out in (first, second)]
		assert digests[0] == digests[1]
		assert (first / "model.txt").read_bytes() == (second / "model.txt").read_bytes()


@pytest.mark.slow
class TestGridExperiment:
	"""10x10 grid, half the nodes hidden, 500 training and 500 test configurations, 100 epochs"""

	SEEDS = range(1, 6)

	@staticmethod
	def parzen_report(tmp_path, seed:int, variant:str) -> dict:
		data = tmp_path / f"data-{seed}"
		out = tmp_path / f"{variant}-{seed}"
		arguments = settings(
			f"seed={seed}", f"model={data / 'model.txt'}", f"data={data / 'train.txt'}", f"test_data={data / 'test.txt'}", f"output={out}",
			f"variant={variant}", "epochs=100", "e_ell=100", "e_chains=1", "ais_steps=0", "workers=4"
		)
		if not (data / "train.txt").exists():
			assert main(["generate", "-q"] + settings(f"seed={seed}", f"output={data}", "workers=4")) == ExitStatus.OK
		assert main(["train", "-q"] + arguments) == ExitStatus.OK
		assert main(["eval", "-q"] + arguments) == ExitStatus.OK
		return json.loads((out / "eval.json").read_text())

	def test_apcd_against_mean_field(self, tmp_path):
		wins = 0
		gaps = []
		for seed in self.SEEDS:
			apcd = self.parzen_report(tmp_path, seed, "apcd")
			mfpcd = self.parzen_report(tmp_path, seed, "mfpcd")
			wins += apcd["parzen_mean"] >= mfpcd["parzen_mean"]
			for report in (apcd, mfpcd):
				gaps.append(abs(report["parzen_mean"] - report["true_parzen_mean"]))
		assert wins >= 4
		assert max(gaps) <= 15, statistics.mean(gaps)
