"""Exception hierarchy.

Three categories map onto CLI exit codes: manifest problems (2), data
problems (3), numeric/degenerate-input problems (4).
"""


class SynchrolabError(Exception):
    """Base class for all toolkit errors."""


class ManifestError(SynchrolabError):
    """Manifest missing, unreadable, schema-invalid, or referencing absent files."""


class DataError(SynchrolabError):
    """Input data malformed, empty, or structurally inconsistent."""


class NumericError(SynchrolabError):
    """Computation impossible on the given values (degenerate or out of domain)."""


# --- dataset ---------------------------------------------------------------

class EmptyFile(DataError):
    pass


class MalformedRow(DataError):
    def __init__(self, row_index: int, detail: str = ""):
        self.row_index = row_index
        msg = f"unparseable row {row_index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class RateMismatch(DataError):
    pass


class OutOfRange(DataError):
    pass


class EmptyCohort(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class IncompleteDesign(DataError):
    pass


# --- preprocessing / signal numerics ----------------------------------------

class CutoffAboveNyquist(NumericError):
    pass


class SignalTooShort(NumericError):
    pass


class AllFlagged(NumericError):
    pass


class DegenerateRange(NumericError):
    pass


class ConstantInput(NumericError):
    pass


class InfeasibleBand(NumericError):
    pass


class InputOutOfUnitRange(NumericError):
    pass


# --- statistics --------------------------------------------------------------

class SampleTooSmall(NumericError):
    pass


class SampleTooLarge(NumericError):
    pass


class DegenerateDesign(NumericError):
    pass


class ZeroVariance(NumericError):
    pass


class OutOfRangeP(NumericError):
    pass


class ZeroPooledSD(NumericError):
    pass
