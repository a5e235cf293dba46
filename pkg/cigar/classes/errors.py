"""
    This file is part of cigar.


    Exception hierarchy. Everything raised deliberately by the package is
    a CigarError so that callers (and the command line) can separate input
    problems from numeric or training failures.

"""


class CigarError(Exception):
    pass


class InputError(CigarError):
    """ Bad input files, arguments or artifacts. """
    pass


class ParseError(InputError):
    def __init__(self, message: str, line: int = None) -> None:
        self.line = line
        super().__init__(message if line is None else f'line {line}: {message}')


class EmptyDatasetError(InputError):
    pass


class PreconditionError(InputError):
    pass


class ArtifactError(InputError):
    pass


class ConfigurationError(CigarError):
    pass


class NumericError(CigarError):
    def __init__(self, message: str, epoch: int = None) -> None:
        self.epoch = epoch
        super().__init__(message if epoch is None else f'epoch {epoch}: {message}')


class SamplingError(CigarError):
    pass
