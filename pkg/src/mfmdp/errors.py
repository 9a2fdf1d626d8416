"""Exception hierarchy.

Every error carries a module-qualified ``code`` and the process exit status
the command line front-end uses for it.
"""

from __future__ import annotations


class MFMDPError(Exception):
    code = "mfmdp.error"
    exit_status = 5

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class InputError(MFMDPError, ValueError):
    code = "input"
    exit_status = 2


class ConsistencyError(MFMDPError, ValueError):
    code = "consistency"
    exit_status = 2


class ConfigError(InputError):
    code = "cli.config"
    exit_status = 2

    def __init__(self, message: str, field: str | None = None, code: str | None = None):
        super().__init__(message, code)
        self.field = field


class CapacityError(MFMDPError):
    code = "capacity"
    exit_status = 3


class InfeasibleError(MFMDPError):
    code = "infeasible"
    exit_status = 4


class ParameterError(InfeasibleError):
    """A model parameter (kappa, alpha, ...) lies outside its admissible range."""

    code = "parameter"


class IterationLimitError(MFMDPError):
    code = "iteration_limit"
    exit_status = 5

    def __init__(self, message: str, residual: float, code: str | None = None):
        super().__init__(message, code)
        self.residual = residual
