"""Exception hierarchy shared by every calsynth module."""

from __future__ import annotations


class CalibError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class InvalidParam(CalibError, ValueError):
    pass


class EmptyInput(CalibError, ValueError):
    pass


class InvalidScore(CalibError, ValueError):
    pass


class ShapeMismatch(CalibError, ValueError):
    pass


class GapDominates(CalibError, ValueError):
    """The confidence gap swallows the whole error budget; the bound is vacuous."""


class ZeroGap(CalibError, ValueError):
    pass


class CountMismatch(CalibError):
    pass


class OneClass(CalibError, ValueError):
    pass


class Separable(CalibError):
    """Maximum likelihood does not exist because the classes are separable."""


class Transport(CalibError):
    pass


class BadStatus(CalibError):
    def __init__(self, code: int, body: str = ""):
        super().__init__(f"endpoint returned HTTP {code}")
        self.code = code
        self.body = body


class RateLimited(BadStatus):
    pass


class MalformedResponse(CalibError):
    pass


class ParseFailure(CalibError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class UnparsableLabel(CalibError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw
