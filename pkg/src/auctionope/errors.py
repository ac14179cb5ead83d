"""Exception hierarchy shared across the toolkit."""


class AuctionOpeError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(AuctionOpeError):
    """A required column is missing or misdeclared in an input file."""


class DatasetEmptyError(AuctionOpeError):
    """No usable rows survived ingestion."""


class ConfigurationError(AuctionOpeError):
    """An unknown feature, policy, or config key was requested."""


class EmptySegmentError(AuctionOpeError):
    """A segment contains no training samples."""


class ModeMismatchError(AuctionOpeError):
    """runner_up training was requested but market prices are incomplete."""


class UnknownSegmentError(AuctionOpeError):
    """APS lookup for a segment the table was never fitted on."""


class FitDegenerateError(AuctionOpeError):
    """Samples are degenerate for the requested distribution family."""


class NoFitError(AuctionOpeError):
    """Every candidate distribution family failed to fit."""


class UnsupportedOperationError(AuctionOpeError):
    """Operation needs simulator-only data (e.g. policy agreement flags)."""


class UndefinedLiftError(AuctionOpeError):
    """CTR lift against a zero-valued logging policy."""


class UndefinedCorrelationError(AuctionOpeError):
    """Pearson correlation of a zero-variance series."""


class DegenerateTestError(AuctionOpeError):
    """Paired t-test on zero-variance differences."""


class InvariantError(AuctionOpeError):
    """A fitted model violates one of its structural invariants."""


class MissingArtifactError(AuctionOpeError):
    """A pipeline stage needs a file that an earlier stage did not write."""
