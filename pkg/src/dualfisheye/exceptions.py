"""Exception hierarchy for the stitching pipeline."""


class StitchError(Exception):
    """Base class for every error raised by this package.

    ``stage`` names the pipeline stage that failed, when known.
    """

    stage = None

    def __init__(self, message="", stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class SingularTransform(StitchError):
    pass


class EmptyBin(StitchError):
    pass


class IllConditioned(StitchError):
    pass


class BadProfile(StitchError):
    pass


class NoOverlap(StitchError):
    pass


class DegenerateConfiguration(StitchError):
    pass


class LowConfidence(StitchError):
    """Peak correlation below threshold; ``result`` holds the rejected match."""

    def __init__(self, message="", result=None, stage=None):
        super().__init__(message, stage=stage)
        self.result = result


class CoverageHole(StitchError):
    pass


class AspectMismatch(StitchError):
    pass
