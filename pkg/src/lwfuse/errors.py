"""Exception hierarchy. Each class carries the CLI exit code for its error class."""


class FusionError(Exception):
    exit_code = 1


class ShapeError(FusionError, ValueError):
    exit_code = 3


class DimensionError(ShapeError):
    """A tensor dimension is zero or negative."""


class ConfigError(FusionError, ValueError):
    exit_code = 4


class ArgumentError(FusionError, ValueError):
    exit_code = 4


class TapeError(FusionError, RuntimeError):
    """Backward was asked for a value this tape never recorded."""


class FormatError(FusionError):
    exit_code = 2


class UnsupportedFormatError(FormatError):
    pass


class CorruptionError(FormatError):
    pass


class DatasetError(FusionError):
    exit_code = 6


class LayoutError(DatasetError):
    pass


class PairError(DatasetError):
    pass


class EmptyDatasetError(DatasetError, ArgumentError):
    """No image pairs to work with. An argument error that exits as a dataset error."""
    exit_code = 6
