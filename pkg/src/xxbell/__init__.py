"""Bell nonlocality and pairwise entanglement in disordered spin-1/2 XX rings.

The production route maps each ring to free fermions and evaluates spin
correlators from the one-body correlation matrix; :mod:`xxbell.oracle`
provides an exact-diagonalization cross-check for small rings.
"""

__version__ = "0.1.0"

from .model import ChainSpec, DisorderKind, DisorderSpec, Model, build_chain, derive_seed  # noqa: E402
from .freefermion import FermionSolution, ground_state_correlations  # noqa: E402
from .correlators import PairObservables, PairTable, all_pairs, cxx, czz  # noqa: E402
from .measures import bell, concurrence, fidelity, is_nonlocal  # noqa: E402
from .ensemble import EnsembleAccumulator, EnsembleConfig, merge, run_ensemble  # noqa: E402
from .analysis import ThresholdEstimate, threshold_scan  # noqa: E402

__all__ = [
    "__version__",
    "ChainSpec",
    "DisorderKind",
    "DisorderSpec",
    "Model",
    "build_chain",
    "derive_seed",
    "FermionSolution",
    "ground_state_correlations",
    "PairObservables",
    "PairTable",
    "all_pairs",
    "cxx",
    "czz",
    "bell",
    "concurrence",
    "fidelity",
    "is_nonlocal",
    "EnsembleAccumulator",
    "EnsembleConfig",
    "merge",
    "run_ensemble",
    "ThresholdEstimate",
    "threshold_scan",
]
