"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid construction parameters or incompatible shapes."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation (e.g. zero vector)."""


class RankDeficiencyError(ValueError):
    """Matrix does not have the numerical rank an operation requires."""

    def __init__(self, message, numerical_rank=None):
        super().__init__(message)
        self.numerical_rank = numerical_rank


class NumericalError(RuntimeError):
    """A numerical routine failed or produced non-finite output."""


class DivergenceError(RuntimeError):
    """An integrated flow blew up; carries the time of blowup."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time
