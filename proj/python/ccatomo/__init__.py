"""Coupled-cavity-array Hamiltonian tomography and thermal crosstalk calibration."""

from ._core import *  # noqa: F401,F403
from ._core import CcatomoError, __version__  # noqa: F401
