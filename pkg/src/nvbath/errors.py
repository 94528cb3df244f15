"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or infeasible user input (parameters, config files, CLI args)."""


class NumericalError(RuntimeError):
    """Numerical failure during integration or analysis (NaN fields, blowup)."""
