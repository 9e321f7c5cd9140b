from .base import DiscreteEnvironment, metrics
from .external import ExternalBlackBox
from .knorr import knorr_env
from .laser import laser_env
from .synthetic import ContinuousEnvironment, synthetic_env
from .ypacarai import ypacarai_env

__all__ = ["DiscreteEnvironment", "ContinuousEnvironment", "ExternalBlackBox", "knorr_env",
           "laser_env", "metrics", "synthetic_env", "ypacarai_env"]
