# -*- coding: utf-8 -*-
"""Exceptions raised by neurograph."""


class NeurographError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(NeurographError, ValueError):
    pass


class DomainError(NeurographError, ValueError):
    """Input outside the domain of a primitive (log of a negative, ...)."""


class SingularTransformError(NeurographError):
    def __init__(self, determinant):
        NeurographError.__init__(
            self, 'Near-singular affine transform (det={0:.3e})'.format(
                determinant))
        self.determinant = determinant


class DegenerateInputError(NeurographError, ValueError):
    pass


class NonFiniteError(NeurographError):
    def __init__(self, stage):
        NeurographError.__init__(
            self, 'Non-finite values produced by stage {0!r}'.format(stage))
        self.stage = stage


class ConfigError(NeurographError, ValueError):
    pass


class SpecError(NeurographError, ValueError):
    """Phantom spec violation."""


class StageOrderError(NeurographError):
    pass


class TrainingDivergedError(NeurographError):
    def __init__(self, message, params=None, log=None):
        NeurographError.__init__(self, message)
        self.params = params
        self.log = log


class FormatError(NeurographError):
    """Malformed file."""


class HeaderError(FormatError):
    pass


class BadMagicError(FormatError):
    pass


class UnsupportedDatatypeError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class TransformFormatError(FormatError):
    pass


class CheckpointError(FormatError):
    pass
