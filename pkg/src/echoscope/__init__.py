"""echoscope: follower-graph vs retweet-graph echo chamber analytics."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    EchoscopeError,
    InfeasibleConfigError,
    InputFormatError,
    UndefinedStatisticError,
)
