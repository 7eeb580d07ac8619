"""Exception types shared across the package."""


class TagsongError(Exception):
    """Base class for all errors raised by tagsong."""


class ShapeError(TagsongError):
    """Dimension or shape mismatch between operands."""


class DomainError(TagsongError):
    """Input value outside an operation's domain (zero vector, empty set, ...)."""


class NumericalError(TagsongError):
    """A numerical procedure failed (singular system, NaN loss, ...)."""


class ParseError(TagsongError):
    """A data file violates its documented format."""


class SamplingError(TagsongError):
    """Triplet sampling cannot produce a valid triplet."""


class SplitError(TagsongError):
    """A train/valid/test split cannot be formed as requested."""


class BindingError(TagsongError):
    """Song vectors required for binding are missing."""


class OOVError(TagsongError):
    """A tag cannot be resolved against the word-vector vocabulary."""
