"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``NumericError`` -> 3.
"""


class ChardenseError(Exception):
    """Base class for all package errors."""


class DataError(ChardenseError):
    """Malformed input data (corpus, embeddings, config, checkpoint)."""


class FormatError(DataError):
    """A file line does not follow the expected column layout."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class BIOError(DataError):
    """Label sequence violates the BIO scheme (or a label is not BIO at all)."""


class NumericError(ChardenseError):
    """Non-finite loss or parameters encountered during training."""


class CheckpointError(DataError):
    code = 10


class CheckpointVersionError(CheckpointError):
    code = 11


class CheckpointTruncatedError(CheckpointError):
    code = 12


class CheckpointChecksumError(CheckpointError):
    code = 13
