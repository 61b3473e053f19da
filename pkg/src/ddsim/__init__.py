"""ddsim: dynamical-decoupling pulse-sequence simulation for spin-1/2
ensembles with systematic pulse errors.

Subpackages: :mod:`ddsim.su2` (rotation algebra), :mod:`ddsim.errors`
(error-model sampling), :mod:`ddsim.sequences` (pulse-program builders),
:mod:`ddsim.simulator` (instantaneous-pulse Monte Carlo),
:mod:`ddsim.analysis` (order-of-error verification), :mod:`ddsim.blochrd`
(finite-pulse mean-field dynamics with radiation damping), and
:mod:`ddsim.cli` (experiment runner).
"""

__version__ = "0.1.0"

from .errors import ErrorParameters, ErrorRealization, realizations
from .sequences import PulseProgram, build_cdd, build_cpmg, build_pdd, build_sdd
from .simulator import FidelityRecord, cycle_propagator, run_ensemble, run_fidelity
from .su2 import Rotation, bloch_state

__all__ = [
    "ErrorParameters",
    "ErrorRealization",
    "FidelityRecord",
    "PulseProgram",
    "Rotation",
    "bloch_state",
    "build_cdd",
    "build_cpmg",
    "build_pdd",
    "build_sdd",
    "cycle_propagator",
    "realizations",
    "run_ensemble",
    "run_fidelity",
    "__version__",
]
