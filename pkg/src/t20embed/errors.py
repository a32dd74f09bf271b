"""Exception types shared across the package."""


class T20EmbedError(Exception):
    """Base class for all package errors."""


class ShapeError(T20EmbedError):
    """Operands have incompatible shapes; message names both shapes."""


class EmptyPoolError(T20EmbedError):
    """Mean pooling was asked to pool zero rows."""


class FrozenParameterError(T20EmbedError):
    """An optimizer step was applied to a non-trainable parameter."""


class DegenerateDataError(T20EmbedError):
    """Clustering input cannot support the requested structure."""


class ValidationError(T20EmbedError):
    """A record or file failed schema validation."""


class EncodingError(T20EmbedError):
    """A record cannot be encoded (e.g. unknown venue)."""


class ConfigurationError(T20EmbedError):
    """Inconsistent model/training configuration."""


class SamplingError(T20EmbedError):
    """Pair or split sampling is impossible for the given data."""


class SplitError(T20EmbedError):
    """A class lacks enough members for the requested test split."""


class ModelFormatError(T20EmbedError):
    """A model file is truncated, mis-versioned, or shape-inconsistent."""


class NumericError(T20EmbedError):
    """Training produced a non-finite loss or parameter."""
