"""Exception hierarchy. Everything raised on bad data or bad configuration
derives from :class:`HorizonSegError`, which the CLI maps to exit code 1."""


class HorizonSegError(Exception):
    pass


class FormatError(HorizonSegError):
    """Malformed or unsupported file content."""


class ChecksumError(FormatError):
    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class GeometryError(HorizonSegError, IndexError):
    """Index or window outside the cube."""


class OverlapError(HorizonSegError):
    """Two thickened horizons claim the same voxel."""

    def __init__(self, first, second, context=''):
        msg = f'thickened horizons {first!r} and {second!r} overlap'
        if context:
            msg += f' ({context})'
        super().__init__(msg)
        self.first = first
        self.second = second


class ConfigError(HorizonSegError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line
