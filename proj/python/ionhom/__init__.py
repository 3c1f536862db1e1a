"""Trapped-ion photon correlation simulator and analysis (C++ core)."""

from ._ionhom import *  # noqa: F401,F403
from ._ionhom import __doc__  # noqa: F401

__version__ = "0.1.0"
