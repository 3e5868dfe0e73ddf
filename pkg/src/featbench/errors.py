"""Exception types raised across featbench."""


class FeatBenchError(Exception):
    """Base class for all featbench errors."""


class InvalidInputError(FeatBenchError, ValueError):
    pass


class EmptyPatchError(FeatBenchError):
    pass


class DegenerateGeometryError(FeatBenchError):
    pass


class DegenerateOutputError(FeatBenchError):
    pass


class EmptyCorrespondenceError(FeatBenchError):
    pass


class DataError(FeatBenchError):
    """Malformed or unreadable on-disk data (PLY, pose, manifest, dumps)."""


class PlyParseError(DataError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ManifestError(DataError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid manifest:\n  " + "\n  ".join(self.problems))


class DegenerateNormalWarning(UserWarning):
    pass
