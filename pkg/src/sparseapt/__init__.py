"""Sparse automatic parameter tying for small feedforward classifiers."""
from .nn import NetworkSpec, ParamVector
from .trainer import AptConfig, AptResult, random_tying_baseline, run_apt

__version__ = "0.1.0"
