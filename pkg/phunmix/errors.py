class PhunmixError(Exception):
    """Base class for every error raised by phunmix."""


class InvalidArgumentError(PhunmixError, ValueError):
    pass


class UnsupportedRegimeError(PhunmixError, ValueError):
    """Raised for operations that only exist in the determined case (K <= M)."""


class BudgetExceededError(PhunmixError, RuntimeError):
    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(f"grid search needs {required} residual evaluations, budget is {budget}")


class ConfigError(PhunmixError, ValueError):
    pass


class AudioError(PhunmixError, OSError):
    pass
