"""Command line driver: generate, train, eval, validate-schedule and report"""

import argparse, dataclasses, json, logging, os, sys, time, typing
from .errors import ExitStatus, ApcdError, InvalidInputError
from .topology import VariablePartition
from .model import PairwiseModel, read_model
from .schedules import ScheduleSpec, validate_schedule_pair
from .trainer import Variant, MetricsRecord, read_trace, write_trace, train
from .baselines import train_mfpcd, train_hapcd, train_exact_em
from .evaluation import EvaluationReport, ParzenMonitor, evaluate
from .synth import Dataset, grid_topology, random_grid_model, generate_samples, select_hidden
from .checkpoint import Checkpoint
from .config import RunConfig

__all__ = ["main", "build_parser"]

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

MODEL_FILE = "model.txt"
TRAIN_FILE = "train.txt"
TEST_FILE = "test.txt"
METRICS_FILE = "metrics.jsonl"
CHECKPOINT_FILE = "checkpoint.txt"
RUN_FILE = "run.json"
EVAL_FILE = "eval.json"

SAMPLING_TRAINERS = {
	Variant.APCD: train,
	Variant.MFPCD: train_mfpcd,
	Variant.HAPCD: train_hapcd,
}


def _load_model(path:str) -> typing.Tuple[PairwiseModel, VariablePartition]:
	if not path:
		raise InvalidInputError("No model file given (set model=...)")
	with open(path, encoding="utf-8") as file:
		model, part = read_model(file)
	return model, part if part is not None else VariablePartition.all_visible(model.num_nodes)

def _load_dataset(path:str, what:str) -> Dataset:
	if not path:
		raise InvalidInputError(f"No {what} file given")
	with open(path, encoding="utf-8") as file:
		return Dataset.from_file(file)

def _write_json(path:str, record:dict):
	with open(path, "w", encoding="utf-8") as file:
		json.dump(record, file, indent="\t", sort_keys=True)
		print(file=file)

def _read_json(path:str) -> dict:
	try:
		with open(path, encoding="utf-8") as file:
			return json.load(file)
	except ValueError as e:
		raise InvalidInputError(f"{path}: {e}") from None

def _provenance(config:RunConfig) -> typing.List[str]:
	return [f"config-digest {config.digest}", f"seed {config.seed}"]

def _write_model(path:str, model:PairwiseModel, part:VariablePartition, config:RunConfig):
	with open(path, "w", encoding="utf-8") as file:
		model.write(file, part, _provenance(config))

def _write_dataset(path:str, dataset:Dataset, config:RunConfig):
	with open(path, "w", encoding="utf-8") as file:
		dataset.write(file, _provenance(config))


def cmd_generate(args:argparse.Namespace, config:RunConfig) -> ExitStatus:
	"""Ground-truth grid model, hidden partition, and train/test samples"""

	spec = config.grid_spec()
	model_seed, hidden_seed, test_seed = (config.derived_seed(key) for key in ("model_seed", "hidden_seed", "test_seed"))
	model = random_grid_model(spec, model_seed)
	part = select_hidden(grid_topology(spec.rows, spec.cols), spec.hidden_fraction, hidden_seed)

	logger.info("Sampling %d training and %d test configurations (%d sweeps each)", config.train_count, config.test_count, config.sweeps_per_sample)
	train_data = Dataset(generate_samples(model, config.train_count, config.sweeps_per_sample, config.seed, config.workers))
	test_data = Dataset(generate_samples(model, config.test_count, config.sweeps_per_sample, test_seed, config.workers))

	out = config.output_directory
	os.makedirs(out, exist_ok=True)
	_write_model(os.path.join(out, MODEL_FILE), model, part, config)
	_write_dataset(os.path.join(out, TRAIN_FILE), train_data, config)
	_write_dataset(os.path.join(out, TEST_FILE), test_data, config)
	_write_json(os.path.join(out, RUN_FILE), {
		"name": config.name,
		"command": "generate",
		"config_digest": config.digest,
		"seed": config.seed,
		"grid": dataclasses.asdict(spec),
		"weight_parameterization": "weight_std is the standard deviation; variance is weight_std squared",
		"seeds": {"model": model_seed, "hidden": hidden_seed, "train": config.seed, "test": test_seed},
		"sweeps_per_sample": config.sweeps_per_sample,
		"sweep": "full systematic sweep in ascending node order",
		"train_count": len(train_data),
		"test_count": len(test_data),
		"hidden": list(part.hidden),
		"train_digest": train_data.digest,
		"test_digest": test_data.digest,
	})
	logger.info("Wrote model and datasets to %s", out)
	return ExitStatus.OK


def _truncate_metrics(path:str, iteration:int):
	"""Keep only the records a checkpoint at `iteration` already covers"""
	if not os.path.exists(path):
		return
	with open(path, encoding="utf-8") as file:
		records = [record for record in read_trace(file) if record.iteration <= iteration]
	with open(path, "w", encoding="utf-8") as file:
		write_trace(file, records)

def cmd_train(args:argparse.Namespace, config:RunConfig) -> ExitStatus:
	"""Fit a zero-initialized model to the training data with the configured variant"""

	truth, part = _load_model(config.model)
	data = _load_dataset(config.data, "training data")
	model0 = PairwiseModel(truth.topology)
	variant = Variant(config.variant)

	out = config.output_directory
	os.makedirs(out, exist_ok=True)
	metrics_path = os.path.join(out, METRICS_FILE)
	checkpoint_path = os.path.join(out, CHECKPOINT_FILE)
	run = {
		"name": config.name,
		"command": "train",
		"variant": variant.value,
		"config_digest": config.digest,
		"seed": config.seed,
		"dataset_digest": data.digest,
		"scan": "ell full systematic sweeps in ascending node order",
		"minibatch": "rotating contiguous batch",
		"enumerable": truth.num_nodes <= config.exact_limit,
	}
	started = time.perf_counter()

	if variant is Variant.EXACT_EM:
		model_path = os.path.join(out, MODEL_FILE)
		previous = []
		mode = "w"
		if args.resume:
			with open(metrics_path, encoding="utf-8") as file:
				previous = read_trace(file)
			if any(record.config_digest != config.digest for record in previous):
				raise InvalidInputError(f"{metrics_path} was written under a different configuration")
			model0, _ = _load_model(model_path)
			mode = "a"
		done = previous[-1].iteration if previous else 0
		converged = len(previous) >= 2 and previous[-1].exact_loglik - previous[-2].exact_loglik < 1e-9
		if previous:
			logger.info("Resuming exact-em after iteration %d", done)

		def save_iteration(model, record):
			record.config_digest, record.seed = config.digest, config.seed
			print(record.to_json(), file=metrics, flush=True)
			_write_model(model_path, model, part, config)

		_write_json(os.path.join(out, RUN_FILE), run)
		with open(metrics_path, mode, encoding="utf-8") as metrics:
			remaining = 0 if converged else max(0, config.max_outer - done)
			model, trace = train_exact_em(model0, part, data.rows, remaining, config.inner_tol, config.exact_limit, callback=save_iteration, first_iteration=done)
	else:
		train_config = config.train_config(len(data))
		run["schedule_verdict"] = str(train_config.validate(len(data)))
		a, b = str(train_config.a), str(train_config.b)

		state = None
		mode = "w"
		if args.resume:
			checkpoint = Checkpoint.load(checkpoint_path)
			if checkpoint.config_digest != config.digest:
				raise InvalidInputError(f"{checkpoint_path} was written under a different configuration")
			if checkpoint.variant != variant.value:
				raise InvalidInputError(f"{checkpoint_path} belongs to a {checkpoint.variant} run, not {variant.value}")
			state = checkpoint.restore()
			_truncate_metrics(metrics_path, state.t)
			mode = "a"
			logger.info("Resuming %s from iteration %d", variant.value, state.t)

		monitor = None
		if config.monitor_samples:
			test_data = _load_dataset(config.test_data, "test data")
			monitor = ParzenMonitor(part, data.rows, test_data.rows, config.monitor_samples, config.sweeps_per_sample, config.derived_seed("eval_seed"),
				config.sigma_grid, config.validation_fraction, config.workers)

		def save(state):
			Checkpoint.from_state(state, variant.value, config.digest, config.seed, a, b).save(checkpoint_path)

		_write_json(os.path.join(out, RUN_FILE), run)
		with open(metrics_path, mode, encoding="utf-8") as metrics:
			model, trace = SAMPLING_TRAINERS[variant](model0, part, data.rows, train_config, state=state, metrics=metrics, checkpoint=save, monitor=monitor)

	run["elapsed_seconds"] = time.perf_counter() - started
	if not trace:
		with open(metrics_path, encoding="utf-8") as file:
			trace = read_trace(file)
	if trace:
		run["final"] = trace[-1].comparable()
	_write_json(os.path.join(out, RUN_FILE), run)
	_write_model(os.path.join(out, MODEL_FILE), model, part, config)
	logger.info("Wrote trained model to %s", os.path.join(out, MODEL_FILE))
	return ExitStatus.OK


def cmd_eval(args:argparse.Namespace, config:RunConfig) -> ExitStatus:
	"""Score a trained model against the test set"""

	model_path = args.model or os.path.join(config.output_directory, MODEL_FILE)
	model, part = _load_model(model_path)
	train_data = _load_dataset(config.data, "training data")
	test_data = _load_dataset(config.test_data, "test data")

	samples = generate_samples(model, config.eval_samples, config.sweeps_per_sample, config.derived_seed("eval_seed"), config.workers)
	report = evaluate(
		model, part, samples, train_data.rows, test_data.rows,
		sigma_grid = config.sigma_grid,
		validation_fraction = config.validation_fraction,
		plan = config.ais_plan() if config.ais_steps > 0 else None,
		seed = config.seed,
		exact_limit = config.exact_limit,
		ais_test = {"auto": None, "on": True, "off": False}[config.ais_test],
		workers = config.workers
	)
	report.config_digest, report.seed = config.digest, config.seed

	out = config.output_directory
	os.makedirs(out, exist_ok=True)
	with open(os.path.join(out, EVAL_FILE), "w", encoding="utf-8") as file:
		report.write(file)
	report.write(sys.stdout)
	return ExitStatus.OK


def cmd_validate_schedule(args:argparse.Namespace, config:RunConfig) -> ExitStatus:
	"""Print the verdict for a schedule pair; exit with VALIDATION if it is invalid"""
	verdict = validate_schedule_pair(ScheduleSpec.from_string(args.a), ScheduleSpec.from_string(args.b), args.variant)
	print(verdict)
	return ExitStatus.OK if verdict.kind is not verdict.Kind.INVALID else ExitStatus.VALIDATION


def _load_run(directory:str) -> dict:
	run = _read_json(os.path.join(directory, RUN_FILE))
	with open(os.path.join(directory, METRICS_FILE), encoding="utf-8") as file:
		run["trace"] = read_trace(file)
	eval_path = os.path.join(directory, EVAL_FILE)
	if os.path.exists(eval_path):
		with open(eval_path, encoding="utf-8") as file:
			run["eval"] = EvaluationReport.from_file(file)
	run["label"] = os.path.basename(os.path.normpath(directory))
	return run

def _cell(value) -> str:
	return "" if value is None else repr(value)

def cmd_report(args:argparse.Namespace, config:RunConfig) -> ExitStatus:
	"""Align the metric traces of several runs into one tab-separated table, then their final numbers"""

	runs = [_load_run(directory) for directory in args.runs]
	if len({run.get("name") for run in runs}) > 1:
		raise InvalidInputError("Runs belong to different experiments: " + ", ".join(sorted({str(run.get('name')) for run in runs})))
	if len({run.get("dataset_digest") for run in runs}) > 1:
		raise InvalidInputError("Runs were trained on different datasets")

	columns = [{record.iteration: getattr(record, args.metric) for record in run["trace"]} for run in runs]
	iterations = sorted(set().union(*columns))

	out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
	try:
		for run in runs:
			print(f"# {run['label']} config-digest {run.get('config_digest')} seed {run.get('seed')}", file=out)
		print("\t".join(["iteration"] + [run["label"] for run in runs]), file=out)
		for iteration in iterations:
			print("\t".join([str(iteration)] + [_cell(column.get(iteration)) for column in columns]), file=out)

		print(file=out)
		print("\t".join(["run", "variant", "parzen_mean", "parzen_sem", "true_parzen_mean", "exact_loglik", "grad_norm", "test_parzen", "seconds"]), file=out)
		for run in runs:
			report = run.get("eval")
			final = run["trace"][-1] if run["trace"] else None
			print("\t".join([
				run["label"],
				str(run.get("variant", "")),
				_cell(report.parzen_mean if report else None),
				_cell(report.parzen_sem if report else None),
				_cell(report.true_parzen_mean if report else None),
				_cell(final.exact_loglik if final else None),
				_cell(final.exact_grad_norm if final else None),
				_cell(final.test_parzen if final else None),
				_cell(run.get("elapsed_seconds")),
			]), file=out)
	finally:
		if out is not sys.stdout:
			out.close()
	return ExitStatus.OK


def build_parser() -> argparse.ArgumentParser:

	common = argparse.ArgumentParser(add_help=False)
	common.add_argument("--config", help="Run configuration file")
	common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="Override a configuration value")
	verbosity = common.add_mutually_exclusive_group()
	verbosity.add_argument("--verbose", "-v", action="store_true", help="Log debug messages")
	verbosity.add_argument("--quiet", "-q", action="store_true", help="Log warnings and errors only")

	parser = argparse.ArgumentParser(prog="apcd", description="Adiabatic persistent contrastive divergence for pairwise binary models")
	commands = parser.add_subparsers(dest="command", required=True)

	generate = commands.add_parser("generate", parents=[common], help="Generate a random grid model and its datasets")
	generate.set_defaults(handler=cmd_generate)

	train_parser = commands.add_parser("train", parents=[common], help="Train a model")
	train_parser.add_argument("--resume", action="store_true", help="Continue from the run's checkpoint")
	train_parser.set_defaults(handler=cmd_train)

	evaluate_parser = commands.add_parser("eval", parents=[common], help="Evaluate a trained model")
	evaluate_parser.add_argument("--model", help="Trained model file (default: the run's model.txt)")
	evaluate_parser.set_defaults(handler=cmd_eval)

	validate = commands.add_parser("validate-schedule", parents=[common], help="Check a pair of step-size schedules")
	validate.add_argument("a", help="E-step schedule, e.g. power:c=1,p=2/3")
	validate.add_argument("b", help="M-step schedule, e.g. power:c=1,p=1")
	validate.add_argument("--variant", default=Variant.APCD.value, choices=[v.value for v in Variant])
	validate.set_defaults(handler=cmd_validate_schedule)

	report = commands.add_parser("report", parents=[common], help="Compare completed runs")
	report.add_argument("runs", nargs="+", help="Run output directories")
	report.add_argument("--metric", default="exact_loglik", choices=[f.name for f in dataclasses.fields(MetricsRecord) if f.name not in ("iteration", "variant", "timestamp", "config_digest", "seed")])
	report.add_argument("--output", "-o", help="Write the table here instead of standard output")
	report.set_defaults(handler=cmd_report)

	return parser

def main(argv:typing.Optional[typing.Sequence[str]]=None) -> int:

	args = build_parser().parse_args(argv)
	level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
	logging.basicConfig(level=level, format=LOG_FORMAT)

	try:
		config = RunConfig.load(args.config, args.overrides)
		return int(args.handler(args, config))
	except ApcdError as e:
		logger.error("%s", e)
		return int(e.exit_status)
	except OSError as e:
		logger.error("%s", e)
		return int(ExitStatus.FAILURE)

if __name__ == "__main__":
	sys.exit(main())
