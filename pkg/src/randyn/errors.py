"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid specification, configuration or argument."""


class PlanRefused(ValidationError):
    """The planner refuses an experiment it cannot run meaningfully."""


class ExpmOverflowError(ArithmeticError):
    """The exponential action left the representable floating range."""


class NormNotConvergedError(RuntimeError):
    """Power iteration hit its iteration cap before settling."""


class EmptyMeasureError(ValueError):
    pass
