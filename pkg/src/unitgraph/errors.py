"""Exception types shared across the package."""


class DataError(Exception):
    """Malformed or inconsistent corpus data."""


class BratError(DataError):
    """Bad standoff annotation line; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConlluError(DataError):
    """Bad CoNLL-U input."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CorpusError(DataError):
    """A corpus directory entry could not be loaded."""


class MissingParseError(DataError):
    """A dependency tree is required but not available for this sentence."""
