"""Exception types shared across the package."""


class ModelError(ValueError):
    """Invalid model specification (negative rates, geometry mismatch, ...)."""


class EvaluationError(ArithmeticError):
    """A local function produced a non-finite value."""


class ConfigError(ValueError):
    """Experiment configuration failed validation."""


class RefusedError(RuntimeError):
    """An operation declined to produce a result because a precondition
    (certificate, truncation remainder, convergence ladder) could not be met."""
