"""Exception hierarchy. Every domain error raised by this package derives
from LadderError so the CLI can map it to a single exit code."""


class LadderError(Exception):
    """Base class for all domain errors."""


# --- embedding / dataset files ---------------------------------------------
class BadMagic(LadderError):
    pass


class UnsupportedVersion(LadderError):
    pass


class ShapeMismatch(LadderError):
    pass


class NonFinite(LadderError):
    pass


class IoError(LadderError):
    pass


class MissingFile(LadderError):
    pass


class RowCountMismatch(LadderError):
    pass


class DuplicateId(LadderError):
    pass


class BadLabel(LadderError):
    pass


# --- projection --------------------------------------------------------------
class SingularSystem(LadderError):
    pass


class DimensionMismatch(LadderError):
    pass


# --- retrieval / slicing -----------------------------------------------------
class EmptySet(LadderError):
    pass


class DegenerateClass(LadderError):
    pass


class EmptySentenceSet(LadderError):
    pass


class EmbedderUnavailable(LadderError):
    pass


# --- LLM client / parsing ----------------------------------------------------
class EmptySentences(LadderError):
    pass


class EmptyRecords(LadderError):
    pass


class HttpError(LadderError):
    pass


class AuthError(LadderError):
    pass


class ParseError(LadderError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class PairingError(LadderError):
    pass


class MissingFixture(LadderError):
    """Mock provider has no canned response for the requested prompt hash."""


# --- mitigation ---------------------------------------------------------------
class DegenerateScores(LadderError):
    pass


class EmptyCell(LadderError):
    pass


class SingleClassSet(LadderError):
    pass


class NoErrorSlices(LadderError):
    pass


class EmptyBundle(LadderError):
    pass


# --- metrics -------------------------------------------------------------------
class EmptyGroundTruth(LadderError):
    pass


class MissingGroupTag(LadderError):
    pass


class SingleClass(LadderError):
    pass


class EmptyDataset(LadderError):
    pass


# --- generator / CLI -------------------------------------------------------------
class ConfigError(LadderError):
    pass


class MissingInput(LadderError):
    pass
