"""Error taxonomy shared by every module.

All errors derive from ``CellwiseError`` (itself a ``ValueError``) so callers
can catch the whole family in one place, e.g. the experiment runner turns
them into error-tagged result rows.
"""


class CellwiseError(ValueError):
    """Base class for every domain error raised by this package."""


# ---- Input validation ----
class EmptyOrTooShort(CellwiseError):
    pass


class NonFinite(CellwiseError):
    pass


class LengthMismatch(CellwiseError):
    pass


class InvalidInput(CellwiseError):
    pass


class CountExceedsN(CellwiseError):
    pass


# ---- Linear algebra ----
class EigenFailure(CellwiseError):
    pass


class FactorizationFailure(CellwiseError):
    pass


class NotPD(CellwiseError):
    pass


class DegenerateDirection(CellwiseError):
    """A robust scale along an OGK principal direction is zero."""


class TooFewSurvivors(CellwiseError):
    """Reweighting kept fewer than p + 1 observations."""


# ---- Metrics / simulation ----
class ZeroBaseline(CellwiseError):
    pass


class SimulationError(CellwiseError):
    """A generator exhausted its resampling budget."""


# ---- CLI / config ----
class ConfigError(CellwiseError):
    pass


class InputParseError(CellwiseError):
    """CSV cell that does not parse as a finite number (1-based row/column)."""

    def __init__(self, message: str, row: int, column: int):
        super().__init__(f"{message} (row {row}, column {column})")
        self.row = row
        self.column = column
