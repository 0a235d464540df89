"""Exception hierarchy used across the package."""


class GBPError(Exception):
    """Base class for all package errors."""


class DomainError(GBPError, ValueError):
    """Argument outside the domain of a numerical routine."""


class MatrixError(GBPError, ValueError):
    """Singular or non positive-definite matrix."""


class ValidationError(GBPError, ValueError):
    """Dataset or configuration failed a validation or propriety rule.

    ``rule`` names the violated rule so callers (and the CLI) can report it.
    """

    def __init__(self, rule, message):
        super().__init__(f"{rule}: {message}")
        self.rule = rule
        self.message = message


class ProprietyError(ValidationError):
    """The posterior under the improper hyper-prior would not be proper."""


class ConfigError(GBPError, ValueError):
    """Inconsistent run configuration."""


class FitError(GBPError, RuntimeError):
    """The hyper-parameter posterior could not be maximised."""


class OptimizationError(FitError):
    """Inner Newton iteration did not converge.

    ``last`` holds the final iterate.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class EnvelopeError(FitError):
    """The acceptance-rejection envelope could not be constructed."""


class SamplerError(GBPError, RuntimeError):
    """The acceptance-rejection sampler failed to produce enough draws."""


class CoverageError(GBPError, RuntimeError):
    """Too many pseudo-data refits failed during method checking."""


class DataFormatError(GBPError, ValueError):
    """Malformed input file; ``line`` is the 1-based line number when known."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line
