import dataclasses, enum, fractions, math, typing
from .errors import InvalidInputError, InternalError

__all__ = ["ScheduleFamily", "ScheduleSpec", "ScheduleVerdict", "schedule_value", "validate_schedule_pair"]

class ScheduleFamily(enum.Enum):
	"""Step-size function families"""

	POWER_LAW = "power"
	"""c / (1+t)^p"""

	LOG_DAMPED = "logdamped"
	"""c / (1 + t log(t+2))"""

	LINEAR_DECAY = "linear"
	"""start, decreasing linearly per epoch to end"""

	CONSTANT = "constant"
	"""c at every step"""


def _parse_number(text:str) -> float:
	"""Parse a float, also accepting a fraction such as 2/3"""
	try:
		return float(fractions.Fraction(text.strip()))
	except (ValueError, ZeroDivisionError):
		raise InvalidInputError(f"Not a number: {text!r}") from None


@dataclasses.dataclass(frozen=True)
class ScheduleSpec:
	"""A parametric step-size schedule a(t) or b(t)"""

	family:ScheduleFamily = ScheduleFamily.POWER_LAW
	c:float = 1.0
	p:float = 1.0
	start:float = 1.0
	end:float = 1.0
	epochs:int = 1

	def __post_init__(self):
		if not isinstance(self.family, ScheduleFamily):
			raise InvalidInputError(f"Unknown schedule family {self.family!r}")

		if self.family is ScheduleFamily.POWER_LAW:
			if not self.c > 0:
				raise InvalidInputError("Power-law schedules need c > 0")
			if not 0 < self.p <= 1:
				raise InvalidInputError("Power-law schedules need p in (0, 1]")
		elif self.family is ScheduleFamily.LOG_DAMPED:
			if not self.c > 0:
				raise InvalidInputError("Log-damped schedules need c > 0")
		elif self.family is ScheduleFamily.LINEAR_DECAY:
			if not (self.start > 0 and self.end > 0):
				raise InvalidInputError("Linear-decay schedules need start > 0 and end > 0")
			if self.end > self.start:
				raise InvalidInputError("Linear-decay schedules must not increase (end > start)")
			if int(self.epochs) < 1:
				raise InvalidInputError("Linear-decay schedules need at least one epoch")
		elif self.family is ScheduleFamily.CONSTANT:
			if not self.c >= 0 or not math.isfinite(self.c):
				raise InvalidInputError("Constant schedules need a finite c >= 0")

	@classmethod
	def power_law(cls, c:float=1.0, p:float=1.0) -> "ScheduleSpec":
		return cls(ScheduleFamily.POWER_LAW, c=c, p=p)

	@classmethod
	def log_damped(cls, c:float=1.0) -> "ScheduleSpec":
		return cls(ScheduleFamily.LOG_DAMPED, c=c)

	@classmethod
	def linear_decay(cls, start:float, end:float, epochs:int) -> "ScheduleSpec":
		return cls(ScheduleFamily.LINEAR_DECAY, start=start, end=end, epochs=int(epochs))

	@classmethod
	def constant(cls, c:float) -> "ScheduleSpec":
		return cls(ScheduleFamily.CONSTANT, c=c)

	@classmethod
	def from_string(cls, text:str) -> "ScheduleSpec":
		"""Parse `family:key=value,...`, e.g. `power:c=1,p=2/3` or `linear:start=1,end=0.05,epochs=300`"""

		name, _, args = text.strip().partition(":")
		try:
			family = ScheduleFamily(name.strip().lower())
		except ValueError:
			raise InvalidInputError(f"Unknown schedule family '{name}' in {text!r}") from None

		allowed = {
			ScheduleFamily.POWER_LAW: {"c", "p"},
			ScheduleFamily.LOG_DAMPED: {"c"},
			ScheduleFamily.LINEAR_DECAY: {"start", "end", "epochs"},
			ScheduleFamily.CONSTANT: {"c"},
		}[family]

		values = {}
		for item in filter(None, (part.strip() for part in args.split(","))):
			key, sep, value = item.partition("=")
			key = key.strip()
			if not sep or key not in allowed:
				raise InvalidInputError(f"Unexpected schedule argument {item!r} for family '{family.value}'")
			values[key] = int(_parse_number(value)) if key == "epochs" else _parse_number(value)

		return cls(family, **values)

	def __str__(self) -> str:
		if self.family is ScheduleFamily.POWER_LAW:
			return f"power:c={self.c:.17g},p={self.p:.17g}"
		elif self.family is ScheduleFamily.LOG_DAMPED:
			return f"logdamped:c={self.c:.17g}"
		elif self.family is ScheduleFamily.LINEAR_DECAY:
			return f"linear:start={self.start:.17g},end={self.end:.17g},epochs={self.epochs}"
		return f"constant:c={self.c:.17g}"


def schedule_value(s:ScheduleSpec, t:int, iterations_per_epoch:int=1) -> float:
	"""The step size at outer iteration t"""

	if t < 0:
		raise InvalidInputError(f"Iteration index must be non-negative ({t} given)")

	if s.family is ScheduleFamily.POWER_LAW:
		value = s.c / (1.0 + t) ** s.p
	elif s.family is ScheduleFamily.LOG_DAMPED:
		value = s.c / (1.0 + t * math.log(t + 2.0))
	elif s.family is ScheduleFamily.LINEAR_DECAY:
		epoch = t // max(1, int(iterations_per_epoch))
		fraction = min(1.0, epoch / (s.epochs - 1)) if s.epochs > 1 else 1.0
		value = s.start + (s.end - s.start) * fraction
	else:
		value = s.c

	if not math.isfinite(value) or value < 0:
		raise InternalError(f"Schedule {s} produced {value} at t={t}")
	return value


@dataclasses.dataclass(frozen=True)
class ScheduleVerdict:
	"""Outcome of checking a schedule pair against the two-time-scale step-size conditions"""

	class Kind(enum.Enum):
		VALID_E_FAST = "valid-E-fast"
		"""a(t)/b(t) -> infinity: the E step runs on the faster time-scale"""

		VALID_E_SLOW = "valid-E-slow"
		"""a(t)/b(t) -> 0: the M step runs on the faster time-scale"""

		ACCEPTED = "accepted"
		"""Not a valid pair, but tolerated for a baseline variant"""

		INVALID = "invalid"

	kind:Kind
	reason:str = ""
	warning:bool = False

	@property
	def is_valid(self) -> bool:
		return self.kind in (self.Kind.VALID_E_FAST, self.Kind.VALID_E_SLOW)

	def __str__(self) -> str:
		text = self.kind.value
		if self.reason:
			text += f": {self.reason}"
		return text


def _decay_rate(s:ScheduleSpec) -> typing.Tuple[float, int]:
	"""(power of t, power of log t) in the asymptotic decay of s"""
	if s.family is ScheduleFamily.POWER_LAW:
		return (s.p, 0)
	return (1.0, 1)

def _single_problem(s:ScheduleSpec) -> typing.Optional[str]:
	"""Why s alone fails the divergent-sum / square-summable conditions, if it does"""

	if s.family is ScheduleFamily.LINEAR_DECAY:
		return f"{s} levels off at a positive floor, so it is not square-summable"
	if s.family is ScheduleFamily.CONSTANT:
		if s.c == 0:
			return f"{s} is frozen, so its sum does not diverge"
		return f"{s} is not square-summable"
	if s.family is ScheduleFamily.POWER_LAW and s.p <= 0.5:
		return f"{s} has p <= 1/2, so it is not square-summable"
	return None

def validate_schedule_pair(a:ScheduleSpec, b:ScheduleSpec, variant:str="apcd") -> ScheduleVerdict:
	"""Check sum a = sum b = inf, sum (a^2 + b^2) < inf, and a/b -> 0 or inf

	Power-law sums diverge for p <= 1 and are square-summable for p > 1/2. The
	log-damped family decays like 1/(t log t): divergent, square-summable, and
	strictly faster-decaying than 1/t. The ratio limit follows from comparing
	decay rates and decides the label: a/b -> infinity, equivalently b/a -> 0,
	puts the E step on the faster time scale and is valid-E-fast; a/b -> 0 is
	valid-E-slow. Under any variant other than apcd a failing pair is accepted
	with a warning.
	"""

	problems = [problem for problem in (_single_problem(a), _single_problem(b)) if problem]

	if not problems:
		rate_a, rate_b = _decay_rate(a), _decay_rate(b)
		if rate_a == rate_b:
			problems.append("a(t)/b(t) tends to a positive constant, not to 0 or infinity")
		elif rate_a < rate_b:
			return ScheduleVerdict(ScheduleVerdict.Kind.VALID_E_FAST, "a(t)/b(t) -> infinity")
		else:
			return ScheduleVerdict(ScheduleVerdict.Kind.VALID_E_SLOW, "a(t)/b(t) -> 0")

	reason = "; ".join(problems)
	if variant != "apcd":
		return ScheduleVerdict(ScheduleVerdict.Kind.ACCEPTED, reason, warning=True)
	return ScheduleVerdict(ScheduleVerdict.Kind.INVALID, reason)
