"""Exception types raised across the package.

Every failure mode a caller is expected to handle has its own class so that
tests and the CLI can match on the condition rather than on message text.
"""

from __future__ import annotations


class IbossError(Exception):
    """Base class for all package-specific failures."""


# --- dense linear algebra -------------------------------------------------

class NotPositiveDefinite(IbossError):
    """A matrix required to be SPD has a non-positive (or negligible) pivot."""


class NotSymmetric(IbossError):
    """A matrix required to be symmetric is not, beyond tolerance."""


class DimensionMismatch(IbossError):
    """Operand shapes are incompatible."""


class RankDeficient(IbossError):
    """A least-squares design has numerically dependent columns."""


class DegenerateColumn(IbossError):
    """A column is constant (zero sample variance) where variability is required."""


# --- subdata selection ----------------------------------------------------

class InsufficientRows(IbossError):
    """Fewer unexcluded rows remain than the selection quota requires."""


# --- estimation -----------------------------------------------------------

class RankDeficientSubdata(IbossError):
    """The subdata design matrix [1, Z*] is not full rank."""


class TooFewRows(IbossError):
    """Subdata has fewer rows than parameters plus one residual degree of freedom."""


class InvalidLevel(IbossError):
    """Confidence level outside the open interval (0, 1)."""


# --- subsampling baselines ------------------------------------------------

class InfeasibleWithoutReplacement(IbossError):
    """Some inclusion probability k*pi_i exceeds 1, so a fixed-size
    without-replacement draw with those marginals does not exist."""


class SingularWeightedDesign(IbossError):
    """A subsample draw produced a singular weighted information matrix.

    Callers should record the event and redraw.
    """


class RankDeficientBlock(IbossError):
    """A divide-and-conquer block is too small or rank deficient."""


class SingularExpectedInfo(IbossError):
    """The expected information matrix sum(pi_i x_i x_i^T) is singular."""


# --- data ingestion and CLI -----------------------------------------------

class ParseError(IbossError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NonPositiveForLog(IbossError):
    def __init__(self, column: str, line: int):
        super().__init__(
            f"column {column!r}, line {line}: log transform requires strictly positive values"
        )
        self.column = column
        self.line = line


class MissingResponse(IbossError):
    """The designated response column does not exist in the input."""


class ConfigError(IbossError):
    """Invalid experiment configuration; ``pointer`` is a JSON pointer to the field."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer
