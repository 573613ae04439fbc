"""Exception types raised across the package."""


class HarmonError(Exception):
    """Base class for every data error the library raises."""


class EmptyName(HarmonError, ValueError):
    pass


class DuplicatePathology(HarmonError, ValueError):
    pass


class ProfileError(HarmonError, ValueError):
    pass


class CsvParseError(HarmonError, ValueError):
    pass


class EmptyDataset(HarmonError, ValueError):
    pass


class DecodeError(HarmonError, ValueError):
    pass


class BitDepthMismatch(DecodeError):
    pass


class IndexOutOfRange(HarmonError, IndexError):
    pass


class ShapeMismatch(HarmonError, ValueError):
    pass


class DuplicateTarget(HarmonError, ValueError):
    pass


class PathologyMismatch(HarmonError, ValueError):
    pass


class NoViewColumn(HarmonError, LookupError):
    pass


class NoPatientIdColumn(HarmonError, LookupError):
    pass


class DegenerateBox(HarmonError, ValueError):
    pass


class NoMaskSource(HarmonError, ValueError):
    pass


class InfeasiblePool(HarmonError, ValueError):
    pass


class EmptyClass(HarmonError, ValueError):
    pass


class SingleClass(HarmonError, ValueError):
    pass


class DomainError(HarmonError, ValueError):
    pass


class LengthMismatch(HarmonError, ValueError):
    pass
