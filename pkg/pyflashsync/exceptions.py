"""
Exception hierarchy for pyflashsync. Every error carries the exit code
the command-line frontend reports for it.
"""

__all__ = ['FlashSyncError', 'InputError', 'DomainError', 'ValidationError',
           'ParseError', 'Mp4ParseError', 'RtpParseError', 'CsvFormatError',
           'ConfigError', 'NumericalError', 'SingularityError',
           'MatchingError', 'AmbiguityError', 'NonPhysicalSolutionError']


class FlashSyncError(Exception):
    exit_code = 1


class InputError(FlashSyncError):
    exit_code = 2


class DomainError(InputError, ValueError):
    """Argument outside the domain of an operation."""


class ValidationError(InputError, ValueError):
    """Data violates an invariant (e.g. non-increasing timestamps)."""


class ParseError(InputError):
    pass


class Mp4ParseError(ParseError):
    """
    Malformed ISO-BMFF input.

    Parameters
    ----------
    message : str
        What went wrong.
    box_path : str
        Slash separated path of the offending box, e.g. 'moov/trak/mdia/mdhd'.
    offset : int
        Byte offset in the stream where the problem was found.
    """

    def __init__(self, message, box_path='', offset=None):
        self.box_path = box_path
        self.offset = offset
        where = box_path or '<root>'
        if offset is not None:
            where += ' @ byte {}'.format(offset)
        super(Mp4ParseError, self).__init__('{} ({})'.format(message, where))


class RtpParseError(ParseError):

    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = 'record {}: {}'.format(index, message)
        super(RtpParseError, self).__init__(message)


class CsvFormatError(ParseError):

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = 'line {}: {}'.format(line, message)
        super(CsvFormatError, self).__init__(message)


class ConfigError(InputError):
    pass


class NumericalError(FlashSyncError):
    exit_code = 3


class SingularityError(NumericalError):
    """
    Rank-deficient least-squares system.

    Parameters
    ----------
    message : str
        Explanation.
    directions : list of str
        Names of the unknowns that cannot be determined.
    """

    def __init__(self, message, directions=()):
        self.directions = list(directions)
        if self.directions:
            message += ' (undetermined: {})'.format(', '.join(self.directions))
        super(SingularityError, self).__init__(message)


class MatchingError(NumericalError):
    pass


class AmbiguityError(MatchingError):
    pass


class NonPhysicalSolutionError(NumericalError):
    pass
