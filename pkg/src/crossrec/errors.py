"""Exception types shared across the pipeline."""

from __future__ import annotations


class CrossRecError(Exception):
    """Base class for all domain errors raised by this package."""


class ShapeMismatch(CrossRecError):
    pass


class TooManyMalformedRows(CrossRecError):
    pass


class EmptyCorpus(CrossRecError):
    pass


class DegenerateCorpus(CrossRecError):
    pass


class EmptyGenreList(CrossRecError):
    pass


class MissingEmbedding(CrossRecError):
    def __init__(self, ids):
        ids = [ids] if isinstance(ids, str) else list(ids)
        super().__init__(f"no stored embedding for: {', '.join(ids)}")
        self.ids = ids


class EmptyInput(CrossRecError):
    pass


class InvalidWeights(CrossRecError):
    pass


class NoPositivePairs(CrossRecError):
    pass


class NonFiniteGradient(CrossRecError):
    pass


class DivergedLoss(CrossRecError):
    pass


class CorruptFile(CrossRecError):
    pass


class CorruptIndex(CorruptFile):
    pass


class UnknownSeedId(CrossRecError):
    def __init__(self, ids, domain: str | None = None):
        ids = [ids] if isinstance(ids, str) else list(ids)
        where = f" in {domain} catalog" if domain else ""
        super().__init__(f"unknown id(s){where}: {', '.join(ids)}")
        self.ids = ids
        self.domain = domain


class IncompatibleIndex(CrossRecError):
    pass


class NoEvalUsers(CrossRecError):
    pass


class LengthMismatch(CrossRecError):
    pass
