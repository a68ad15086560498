"""Error taxonomy. Two kinds matter: bad requests and bad source data."""


class AdapterError(Exception):
    """Base class for everything this package raises on purpose."""


class InputError(AdapterError):
    """The caller asked for something invalid (arguments, job fields)."""


class FormatError(AdapterError):
    """A source file is malformed or internally inconsistent."""
