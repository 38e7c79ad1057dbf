"""Construct, propagate and certify exponential dichotomies of non-autonomous
linear systems, with matrix, heat and Klein-Gordon model problems."""

from .dichotomy import DichotomyCertificate, build_certificate, certify
from .errors import ContractError, DichotomyError
from .linops import OperatorSequence, Subspace, compose

__all__ = [
    "ContractError",
    "DichotomyCertificate",
    "DichotomyError",
    "OperatorSequence",
    "Subspace",
    "build_certificate",
    "certify",
    "compose",
]

__version__ = "0.1.0"
