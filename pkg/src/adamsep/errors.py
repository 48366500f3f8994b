"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value or conflicting options."""


class InputError(ValueError):
    """Invalid runtime input: dimension mismatch, nonfinite data, bad index."""


class InstanceInvalidError(ConfigurationError):
    """Hard-instance precondition violated; ``clause`` names the failing one."""

    def __init__(self, clause, message):
        super().__init__(f"{clause}: {message}")
        self.clause = clause


class DivergenceError(RuntimeError):
    """Iterate became nonfinite at ``step``; carries the partial trajectory."""

    def __init__(self, step, trajectory=None):
        super().__init__(f"nonfinite iterate at step {step}")
        self.step = step
        self.trajectory = trajectory


class FitError(ValueError):
    """Exponent fit impossible (nonpositive quantile); names the offending delta."""

    def __init__(self, delta, message):
        super().__init__(message)
        self.delta = delta
