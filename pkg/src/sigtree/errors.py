"""Exception hierarchy shared by every sigtree module."""


class SigtreeError(Exception):
    """Base class for all library errors."""


class DataError(SigtreeError):
    """Bad input data (as opposed to bad usage)."""


class EmptyImage(DataError):
    pass


class ImageDecodeError(DataError):
    pass


class InvalidPalette(DataError):
    pass


class MalformedSignature(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class ZeroMass(DataError):
    """Both sides of a transport problem carry no mass, so EMD is undefined."""


class InstanceTooLarge(SigtreeError):
    pass


class DuplicateOid(DataError):
    pass


class NotOverfull(SigtreeError):
    pass


class NoValidImages(DataError):
    pass


class IndexNotFound(DataError):
    pass


class CorruptIndex(DataError):
    pass


class VersionMismatch(CorruptIndex):
    pass
