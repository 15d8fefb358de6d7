"""Exception hierarchy shared by all modules."""


class CSDualityError(Exception):
    """Base class for every error raised by the package."""


class ConvergenceError(CSDualityError):
    """A numerical procedure failed to reach its tolerance.

    The CLI maps this family to exit code 2.
    """


class QuadratureNotConverged(ConvergenceError):
    pass


class PVUnstable(ConvergenceError):
    pass


class IterationNotConverged(ConvergenceError):
    pass


class NewtonDiverged(ConvergenceError):
    pass


class IntegratorDiverged(ConvergenceError):
    pass


class EtaTooSmall(ConvergenceError):
    pass


class CutoffTooSmall(ConvergenceError):
    pass


class GridTooNarrow(ConvergenceError):
    pass


class DenominatorVanishes(CSDualityError):
    pass


class StepTooCoarse(CSDualityError):
    pass


class WindowEmpty(CSDualityError):
    pass


class IllConditionedFit(CSDualityError):
    pass


class ConfigError(CSDualityError):
    """Invalid run configuration; carries every violated constraint."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
