"""Shared exception types."""


class KinjectError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(KinjectError):
    """Input document is structurally malformed."""


class ValidationError(KinjectError):
    """A knowledge-base invariant is violated.

    kind is one of: "duplicate_id", "dangling_ref", "typ_exc_overlap",
    "empty_typical", "bad_id".
    """

    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


class UnknownDiseaseError(KinjectError):
    def __init__(self, disease_id):
        super().__init__(f"unknown disease id: {disease_id!r}")
        self.disease_id = disease_id


class EmptyLabelsError(KinjectError):
    pass


class ConfigError(KinjectError):
    pass


class TransportError(KinjectError):
    """Network-level failure after exhausting retries."""


class ProtocolError(KinjectError):
    """Server response does not match the expected completion shape."""


class EmptyCompletionError(KinjectError):
    pass


class EmptyCorpusError(KinjectError):
    pass


class EmptyTokensError(KinjectError):
    pass


class ZeroNormError(KinjectError):
    pass


class DimMismatchError(KinjectError):
    pass


class BadTauError(KinjectError):
    pass


class EmptyCandidatesError(KinjectError):
    pass


class LengthMismatchError(KinjectError):
    pass


class ZeroVarianceError(KinjectError):
    pass


class DegenerateWorldError(KinjectError):
    pass
