"""Exception types shared across the pipeline."""


class SominvestError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SominvestError):
    """A file could not be parsed. Carries the offending line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class ValidationError(SominvestError):
    """Input data violated a structural or domain invariant."""


class AlignmentError(ValidationError):
    """Stock and market series share no common dates."""


class TuningError(SominvestError):
    """No sensitivity grid point produced enough change points."""

    def __init__(self, best_count, min_segments):
        super().__init__(
            f"no grid point reached {min_segments} change points "
            f"(best found: {best_count})"
        )
        self.best_count = best_count
        self.min_segments = min_segments


class StageError(SominvestError):
    """A pipeline stage failed. Carries the stage name for CLI reporting."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
