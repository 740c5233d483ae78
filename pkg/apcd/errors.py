import enum

__all__ = ["ExitStatus", "ApcdError", "InvalidInputError", "CapacityError", "ScheduleError", "DivergenceError", "InternalError"]

class ExitStatus(enum.IntEnum):
	"""Process exit statuses for the command line driver"""

	OK = 0
	FAILURE = 1
	INVALID_INPUT = 2
	VALIDATION = 3
	CAPACITY = 4
	DIVERGENCE = 5

class ApcdError(Exception):
	"""Base class for errors raised by this package"""

	exit_status = ExitStatus.FAILURE

class InvalidInputError(ApcdError, ValueError):
	"""Input has the wrong shape or content"""

	exit_status = ExitStatus.INVALID_INPUT

class CapacityError(ApcdError):
	"""An enumeration would exceed the configured state limit"""

	exit_status = ExitStatus.CAPACITY

	def __init__(self, count:int, limit:int):
		super().__init__(f"Enumeration over {count} variables exceeds the limit of {limit}")
		self.count = count
		self.limit = limit

class ScheduleError(ApcdError, ValueError):
	"""A step-size schedule pair was rejected"""

	exit_status = ExitStatus.VALIDATION

	def __init__(self, message:str, verdict=None):
		super().__init__(message)
		self.verdict = verdict

class DivergenceError(ApcdError, ArithmeticError):
	"""Parameters left the bounded region during training"""

	exit_status = ExitStatus.DIVERGENCE

	def __init__(self, iteration:int, message:str="Parameters diverged"):
		super().__init__(f"Iteration {iteration}: {message}")
		self.iteration = iteration

class InternalError(ApcdError, RuntimeError):
	"""Something produced a value it never should"""
