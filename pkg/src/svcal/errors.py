"""Exception types raised by the backend.

Every error derives from :class:`BackendError` so callers (the CLI in
particular) can catch the whole family at once and map it to exit code 1.
"""


class BackendError(ValueError):
    """Base class for data errors raised by the toolkit."""


class ZeroVector(BackendError):
    pass


class EmptyList(BackendError):
    pass


class DimensionMismatch(BackendError):
    pass


class TooShort(BackendError):
    pass


class OutOfRange(BackendError):
    pass


class MissingEmbedding(BackendError, KeyError):
    def __str__(self):
        return "missing embedding for utterance %r" % (self.args[0],)


class MissingCmf(BackendError, KeyError):
    def __str__(self):
        return "missing CMF for utterance %r" % (self.args[0],)


class MissingStats(BackendError, KeyError):
    def __str__(self):
        return "missing cohort statistics for utterance %r" % (self.args[0],)


class EmptyInput(BackendError):
    pass


class TopKTooLarge(BackendError):
    pass


class DegenerateStd(BackendError):
    pass


class InsufficientSpeakers(BackendError):
    pass


class EmptyBucket(BackendError):
    pass


class NonpositiveDuration(BackendError):
    pass


class SingleClass(BackendError):
    pass


class NonFiniteLoss(BackendError):
    pass


class TrialMismatch(BackendError):
    pass


class AllZeroWeights(BackendError):
    pass


class InvalidSpec(BackendError):
    pass


class RangeOutOfBounds(BackendError):
    pass


class BadMagic(BackendError):
    pass


class TruncatedFile(BackendError):
    pass


class DuplicateId(BackendError):
    pass


class FormatError(BackendError):
    """A text file line that does not follow its documented layout."""
