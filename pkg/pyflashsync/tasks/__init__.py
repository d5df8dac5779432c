from .flash_sync import *
from .simulate_dataset import *
