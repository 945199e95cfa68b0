"""Exception types shared across the package."""


class ResqError(Exception):
    """Base class for all errors raised by resq."""


# price data
class MalformedLine(ResqError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}" if reason else f"line {line_no}")


class NegativePrice(ResqError):
    def __init__(self, line_no):
        self.line_no = line_no
        super().__init__(f"line {line_no}: negative price")


class EmptySelection(ResqError):
    pass


class BoundaryOutOfRange(ResqError):
    pass


# coverage
class MissingSeries(ResqError):
    def __init__(self, mno_key):
        self.mno_key = mno_key
        super().__init__(f"no price series for operator {mno_key!r}")


class UncoveredInterval(ResqError):
    pass


class MissingChoice(ResqError):
    def __init__(self, area_id):
        self.area_id = area_id
        super().__init__(f"no choice for area {area_id!r}")


class IndexOutOfBounds(ResqError):
    pass


# forecaster
class SeriesTooShort(ResqError):
    pass


class Unfitted(ResqError):
    pass


class EmptyHistory(ResqError):
    pass


# env
class EpisodeFinished(ResqError):
    pass


class IllegalAction(ResqError):
    pass


class AreaTooLarge(ResqError):
    pass


# nn / agent / checkpoints
class ShapeMismatch(ResqError):
    pass


class NonFiniteGradient(ResqError):
    pass


class NonFiniteLoss(ResqError):
    pass


class NoLegalAction(ResqError):
    pass


class InsufficientData(ResqError):
    pass


class VersionMismatch(ResqError):
    pass


# trainer / eval
class EmptyAreaSource(ResqError):
    pass


class EmptyAreaSet(ResqError):
    pass


class ZeroBaseline(ResqError):
    pass
