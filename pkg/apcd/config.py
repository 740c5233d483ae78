"""Run configuration: a flat `key = value` file with command-line overrides

	# 10x10 grid, half the nodes hidden
	name = grid10
	variant = apcd
	epochs = 100
	a = power:c=1,p=2/3
	b = power:c=1,p=1

Blank lines and `#` comments are ignored. Unknown keys are an error.
"""

import dataclasses, hashlib, math, typing, io
import numpy as np
from .errors import InvalidInputError
from .sampler import KernelParams
from .schedules import ScheduleSpec
from .trainer import Variant, TrainConfig
from .evaluation import DEFAULT_SIGMA_GRID, AisPlan
from .synth import GridSpec

__all__ = ["RunConfig"]

_SEED_KEYS = {"model_seed": 1, "hidden_seed": 2, "test_seed": 3, "eval_seed": 4}

# Keys that change where or how fast a run executes, never its results
_EXECUTION_KEYS = ("output", "workers", "checkpoint_interval")

@dataclasses.dataclass
class RunConfig:
	"""Every setting of an experiment, with its documented default"""

	name:str = "apcd"
	output:str = ""
	model:str = ""
	data:str = ""
	test_data:str = ""
	variant:str = "apcd"

	epochs:int = 100
	iterations:int = 0
	batch_size:int = 0
	ell:int = 10
	chains:int = 100
	e_ell:int = 0
	e_chains:int = 0
	a:str = "power:c=1,p=2/3"
	b:str = "power:c=1,p=1"
	log_interval:int = 0
	checkpoint_interval:int = 0
	seed:int = 0
	workers:int = 1

	mean_field_iters:int = 30
	switch_fraction:float = 0.5
	hybrid_weight:typing.Optional[float] = None
	max_outer:int = 200
	inner_tol:float = 1e-8
	exact_limit:int = 20

	grid_rows:int = 10
	grid_cols:int = 10
	bias_low:float = -3.0
	bias_high:float = 3.0
	weight_std:float = math.sqrt(0.5)
	hidden_fraction:float = 0.5
	train_count:int = 500
	test_count:int = 500
	sweeps_per_sample:int = 2000
	model_seed:int = 0
	hidden_seed:int = 0
	test_seed:int = 0
	eval_seed:int = 0

	eval_samples:int = 2000
	monitor_samples:int = 0
	parzen_grid:str = ",".join(f"{sigma:g}" for sigma in DEFAULT_SIGMA_GRID)
	validation_fraction:float = 0.2
	ais_steps:int = 1000
	ais_chains:int = 100
	ais_sweeps:int = 1
	ais_spacing:str = "uniform"
	ais_test:str = "auto"

	def __post_init__(self):
		try:
			Variant(self.variant)
		except ValueError:
			raise InvalidInputError(f"Unknown variant '{self.variant}'; expected one of {', '.join(v.value for v in Variant)}") from None
		for spec in (self.a, self.b):
			ScheduleSpec.from_string(spec)
		if not self.sigma_grid:
			raise InvalidInputError("parzen_grid is empty")
		if self.ais_spacing not in ("uniform", "geometric"):
			raise InvalidInputError(f"ais_spacing must be uniform or geometric, not '{self.ais_spacing}'")
		if self.ais_test not in ("auto", "on", "off"):
			raise InvalidInputError(f"ais_test must be auto, on or off, not '{self.ais_test}'")
		if self.seed < 0:
			raise InvalidInputError("Master seed must be non-negative")
		if self.monitor_samples < 0:
			raise InvalidInputError("monitor_samples must be non-negative")

	@staticmethod
	def _convert(field:dataclasses.Field, text:str):
		text = text.strip()
		try:
			if field.type is int:
				return int(text)
			if field.type is float:
				return float(text)
			if field.type == typing.Optional[float]:
				return None if text.lower() in ("", "none") else float(text)
		except ValueError:
			raise InvalidInputError(f"'{field.name}' expects a {getattr(field.type, '__name__', 'number')}, not '{text}'") from None
		return text

	def with_overrides(self, overrides:typing.Iterable[str]) -> "RunConfig":
		"""A copy with `key=value` settings applied"""
		fields = {field.name: field for field in dataclasses.fields(self)}
		values = {}
		for override in overrides:
			key, sep, value = override.partition("=")
			key = key.strip()
			if not sep:
				raise InvalidInputError(f"Expected key=value, found '{override}'")
			if key not in fields:
				raise InvalidInputError(f"Unknown configuration key '{key}'")
			values[key] = self._convert(fields[key], value)
		return dataclasses.replace(self, **values)

	@classmethod
	def from_file(cls, file:io.TextIOBase) -> "RunConfig":
		settings = []
		for line_number, line in enumerate(file, start=1):
			line = line.split("#", 1)[0].strip()
			if not line:
				continue
			key, sep, value = line.partition("=")
			if not sep:
				raise InvalidInputError(f"Line {line_number}: expected 'key = value', found '{line}'")
			settings.append((line_number, f"{key.strip()}={value.strip()}"))

		config = cls()
		for line_number, setting in settings:
			try:
				config = config.with_overrides([setting])
			except InvalidInputError as e:
				raise InvalidInputError(f"Line {line_number}: {e}") from None
		return config

	@classmethod
	def from_string(cls, text:str) -> "RunConfig":
		return cls.from_file(io.StringIO(text))

	@classmethod
	def load(cls, path:typing.Optional[str]=None, overrides:typing.Iterable[str]=()) -> "RunConfig":
		if path:
			with open(path, encoding="utf-8") as file:
				config = cls.from_file(file)
		else:
			config = cls()
		return config.with_overrides(overrides)

	def write(self, file:io.TextIOBase):
		for key, value in sorted(dataclasses.asdict(self).items()):
			print(f"{key} = {'none' if value is None else value}", file=file)

	def __str__(self) -> str:
		text = io.StringIO()
		self.write(text)
		return text.getvalue()

	@property
	def digest(self) -> str:
		"""SHA-256 of the canonical sorted rendering, leaving out the execution-only keys"""
		text = "".join(line for line in str(self).splitlines(keepends=True) if line.split(" = ", 1)[0] not in _EXECUTION_KEYS)
		return hashlib.sha256(text.encode("utf-8")).hexdigest()

	@property
	def output_directory(self) -> str:
		return self.output or f"runs/{self.name}"

	@property
	def schedule_a(self) -> ScheduleSpec:
		return ScheduleSpec.from_string(self.a)

	@property
	def schedule_b(self) -> ScheduleSpec:
		return ScheduleSpec.from_string(self.b)

	@property
	def sigma_grid(self) -> typing.Tuple[float, ...]:
		try:
			grid = tuple(float(sigma) for sigma in self.parzen_grid.split(",") if sigma.strip())
		except ValueError:
			raise InvalidInputError(f"Malformed parzen_grid '{self.parzen_grid}'") from None
		if not grid or any(not sigma > 0 for sigma in grid):
			raise InvalidInputError("parzen_grid needs at least one positive bandwidth")
		return grid

	def derived_seed(self, key:str) -> int:
		"""The named seed, or one derived from the master seed when it is left at 0"""
		value = getattr(self, key)
		if value:
			return int(value)
		return int(np.random.SeedSequence(self.seed, spawn_key=(_SEED_KEYS[key],)).generate_state(1)[0])

	def train_config(self, num_data:int) -> TrainConfig:
		config = TrainConfig(
			kernel = KernelParams(self.ell, self.chains),
			e_kernel = KernelParams(self.e_ell or self.ell, self.e_chains or self.chains),
			a = self.schedule_a,
			b = self.schedule_b,
			batch_size = self.batch_size,
			variant = Variant(self.variant),
			log_interval = self.log_interval,
			seed = self.seed,
			checkpoint_interval = self.checkpoint_interval,
			workers = self.workers,
			mean_field_iters = self.mean_field_iters,
			switch_fraction = self.switch_fraction,
			hybrid_weight = self.hybrid_weight,
			exact_limit = self.exact_limit,
			max_outer = self.max_outer,
			inner_tol = self.inner_tol,
			config_digest = self.digest
		)
		config.iterations = self.iterations or self.epochs * config.iterations_per_epoch(num_data)
		return config

	def grid_spec(self) -> GridSpec:
		return GridSpec(self.grid_rows, self.grid_cols, self.bias_low, self.bias_high, self.weight_std, self.hidden_fraction)

	def ais_plan(self) -> AisPlan:
		if self.ais_spacing == "geometric":
			return AisPlan.geometric(self.ais_steps, self.ais_chains, self.ais_sweeps)
		return AisPlan.uniform(self.ais_steps, self.ais_chains, self.ais_sweeps)
