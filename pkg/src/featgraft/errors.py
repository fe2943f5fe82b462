"""Exception hierarchy shared by the pipeline stages."""


class FeatgraftError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(FeatgraftError):
    """Bad invocation, missing input directory, unsafe output location."""


class NotInGraphError(FeatgraftError, KeyError):
    def __init__(self, path: str):
        super().__init__(path)
        self.path = path

    def __str__(self) -> str:
        return f"path not in dependency graph: {self.path!r}"


class DegenerateVectorError(FeatgraftError, ValueError):
    pass


class DimensionMismatchError(FeatgraftError, ValueError):
    pass


class IndexFormatError(FeatgraftError):
    """An index file is truncated, corrupt, or written by another format version."""


class ProviderError(FeatgraftError):
    """Transport or protocol failure talking to a generation backend."""


class MockScriptError(FeatgraftError):
    """A mock provider was asked for something its script does not cover."""


class PlanningError(FeatgraftError):
    pass


class TaskParseError(PlanningError):
    def __init__(self, message: str, location: str = "$"):
        super().__init__(f"{location}: {message}")
        self.location = location
        self.reason = message


class PlanValidationError(PlanningError):
    def __init__(self, offenders: list[tuple[str, str]]):
        self.offenders = offenders
        listing = "; ".join(f"{path}: {why}" for path, why in offenders)
        super().__init__(f"rejected tasks: {listing}")


class PlanDriftError(FeatgraftError):
    """The project changed under a plan, e.g. a context file disappeared."""
