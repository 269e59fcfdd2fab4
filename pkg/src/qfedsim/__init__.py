"""qfedsim: noisy quantum federated learning simulator.

Density-matrix simulation of a 4-qubit variational classifier, gradient
oracles (parameter shift, finite shots, zero-noise extrapolation), federated
optimizers (FedAvg, SCAFFOLD, anchor-corrected control variates), and a
synthetic biased-oracle testbed for error-floor experiments.
"""

from .backend import BACKEND_NAME

__all__ = ["BACKEND_NAME"]
__version__ = "0.1.0"
