"""Exception types shared across the scanres package."""


class ScanresError(Exception):
    """Base class for all scanres errors."""


class InvalidImage(ScanresError):
    pass


class InvalidDimensions(ScanresError):
    pass


class RegionOutOfBounds(ScanresError):
    pass


class WrongRegionClass(ScanresError):
    pass


class UpsampleNotAllowed(ScanresError):
    pass


class DimMismatch(ScanresError):
    pass


class ImageTooSmall(ScanresError):
    pass


class MapTooSmall(ScanresError):
    pass


class TargetUnreachable(ScanresError):
    pass


class SingleClassError(ScanresError):
    pass


class InvalidFeature(ScanresError):
    pass


class DegenerateFeature(ScanresError):
    pass


class InvalidDimension(ScanresError):
    pass


class TooFewSamples(ScanresError):
    pass


class EmptyInput(ScanresError):
    pass


class ProtocolViolation(ScanresError):
    pass


class ParseError(ScanresError):
    pass


class VersionError(ScanresError):
    pass


class IoError(ScanresError):
    pass
