from .exceptions import *
from .timebase import *
from .ingest import *
from .detect import *
from .syncsolve import *
from .simulate import *
from .core import *
from .configs import *
from .synchronizer import FlashSynchronizer
from . import viz
from . import tasks
