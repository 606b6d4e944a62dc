from scottrank.configs import config
from scottrank._pandas import pandas

__version__ = "0.0.1"
