"""Exception hierarchy. Everything derives from ``ValueError`` so callers can
catch bad input generically."""


class IndaggError(ValueError):
    pass


class InvalidLengthError(IndaggError):
    pass


class WrongFamilyError(IndaggError):
    pass


class InsufficientDataError(IndaggError):
    pass


class DegenerateSampleError(IndaggError):
    pass


class InvalidWidthError(IndaggError):
    pass


class EmptyPlanError(IndaggError):
    """Signal too short for a single window of the requested plan."""


class InsufficientWindowsError(IndaggError):
    """Fewer windows than a k-of-n rule needs."""


class ManifestError(IndaggError):
    pass


class ShapeError(IndaggError):
    pass


class NoSignalError(IndaggError):
    """Labels carry a single class, so nothing can be learned or ranked."""


class DegenerateTrainingError(IndaggError):
    pass


class WrongMatrixError(IndaggError):
    pass


class SplitError(IndaggError):
    pass


class StageError(RuntimeError):
    """Pipeline failure tagged with the stage that raised it."""

    codes = {
        "config": 2,
        "simulate": 10,
        "indicators": 11,
        "split": 12,
        "train": 13,
        "select": 14,
        "forward": 15,
        "report": 16,
        "evaluate": 17,
    }

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def exit_code(self):
        return self.codes.get(self.stage, 1)
