"""Exception hierarchy shared by every module."""


class GWError(Exception):
    """Base class; ``code`` is the machine-readable tag used by the CLI."""

    code = "error"


class InvalidInput(GWError, ValueError):
    code = "invalid_input"


class NotSpd(GWError, ValueError):
    code = "not_spd"


class DomainError(GWError, ValueError):
    code = "domain_error"


class DegenerateSample(GWError):
    code = "degenerate_sample"


class NearNullDegenerate(GWError):
    """The first-order variance vanishes, so normal-theory procedures break down."""

    code = "near_null_degenerate"


class ParseError(GWError, ValueError):
    code = "parse_error"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
