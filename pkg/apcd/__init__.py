# Independent things first to avoid circular imports
from .errors import *
from .topology import *
from .stats import *
from .model import *
from .schedules import *

# These need those
from .exact import *
from .sampler import *

# Then these need those
from .trainer import *
from .baselines import *
from .evaluation import *
from .synth import *
from .checkpoint import *
from .config import *
