"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: UsageError -> 1, DataError -> 2,
NumericError -> 3.
"""


class ConvoctxError(Exception):
    pass


class UsageError(ConvoctxError):
    pass


class DataError(ConvoctxError):
    pass


class UrlError(DataError):
    """Raised when a URL has no recognizable domain; message names the input."""


class NumericError(ConvoctxError):
    pass
