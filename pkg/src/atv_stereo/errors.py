"""Exception types shared across the pipeline."""


class InputError(ValueError):
    """Caller passed arguments that violate an operation's preconditions."""


class PipelineError(RuntimeError):
    """A stage produced no usable output (e.g. a fully invalid cost volume)."""


class StatisticsError(ValueError):
    """A statistic was requested over an empty set of pixels."""


class ParseError(ValueError):
    """A file did not match its expected format."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line
