"""Custom exceptions for spincool operations"""

from typing import Any, List, Optional


class SpinCoolError(Exception):
    """Base exception for spincool errors"""
    pass


class ConfigError(SpinCoolError):
    """Invalid run configuration (unknown keys, bad values, unknown experiment)"""
    pass


class OutputError(SpinCoolError):
    """Result files could not be written"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path


class DomainError(SpinCoolError, ValueError):
    """Precondition on a physical or numerical input violated"""
    pass


class AmplitudeTooLargeError(DomainError):
    """Displacement amplitude too large for the Fock truncation"""

    def __init__(self, alpha: complex, dim: int, required_dim: int):
        super().__init__(
            f"Displacement |alpha|={abs(alpha):.4g} is not supported at d={dim}; "
            f"use a Fock truncation of at least d={required_dim}"
        )
        self.alpha = alpha
        self.dim = dim
        self.required_dim = required_dim


class DimensionMismatchError(DomainError):
    """State, target and parameters disagree on dimensions or basis"""
    pass


class UnsupportedBasisError(DomainError):
    """Operation not defined for the given spin basis"""
    pass


class UnsupportedCouplingError(DomainError):
    """Unequal per-spin couplings were requested"""
    pass


class NumericalError(SpinCoolError):
    """Numerical failure during simulation"""
    pass


class VanishingBranchError(NumericalError):
    """Postselection branch probability below the numerical floor"""

    def __init__(
        self,
        probability: float,
        iteration: Optional[int] = None,
        records: Optional[List[Any]] = None,
    ):
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(
            f"Postselection branch vanished{where} (probability={probability:.3e})"
        )
        self.probability = probability
        self.iteration = iteration
        self.records = list(records) if records else []


class ConvergenceError(NumericalError):
    """Integrator or optimizer did not reach the requested tolerance"""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class StepSizeError(NumericalError):
    """Integration step too large: positivity lost"""
    pass


class DegenerateStateError(NumericalError):
    """State with zero trace"""
    pass
