"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class CoverageError(ValueError):
    """A prime window reaches beyond the sieve limit of the table in use."""


class ResourceLimitError(RuntimeError):
    """A request would exceed the configured memory budget or hard cap."""


class ConfigError(ValueError):
    """Configuration failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
