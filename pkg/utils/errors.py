# utils/errors.py
"""Hiérarchie d'exceptions et codes de sortie"""

from typing import Any, Dict, Optional


class MoserError(Exception):
    """Base error; carries the CLI exit code and a machine-readable code"""

    exit_code = 1
    code = "error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'error': self.code,
            'type': type(self).__name__,
            'message': self.message,
            'exit_code': self.exit_code,
            'details': self.details,
        }


# Préconditions (exit 2)
class PreconditionError(MoserError):
    exit_code = 2
    code = "precondition"


class MassMismatchError(PreconditionError):
    code = "mass mismatch"


class SupportError(PreconditionError):
    code = "support violation"


class DomainError(PreconditionError):
    code = "outside domain"


class InfeasibleCutoffError(PreconditionError):
    code = "infeasible cutoff"


class ConsistencyError(PreconditionError):
    code = "fiber mass mismatch"


class RoughFieldError(PreconditionError):
    code = "rough field"


class PositivityError(PreconditionError):
    code = "nonpositive density"


# Validation des entrées (exit 3)
class ValidationError(MoserError):
    exit_code = 3
    code = "input not area-preserving"


# Taille (exit 4)
class SizeError(MoserError):
    exit_code = 4
    code = "size"


# Solveurs (exit 5)
class SolverError(MoserError):
    exit_code = 5
    code = "solver"


class BracketError(SolverError):
    code = "root not bracketed"


class StepRejectedError(SolverError):
    code = "step rejected"


class SingularKernelError(SolverError):
    code = "singular kernel"


class SurrogateFailureError(SolverError):
    code = "smoothing surrogate failure"


class InversionError(SolverError):
    code = "inversion failure"


class PartitionRefinementError(SolverError):
    code = "partition refinement"
