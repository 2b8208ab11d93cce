"""
Core module for shared models, configuration, logging and errors.
"""

from .models import *
from .config import *
from .exceptions import *
