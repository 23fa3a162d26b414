"""Exception hierarchy shared by every mixscan module."""


class MixscanError(Exception):
    """Base class; the CLI maps subclasses of this to exit code 2."""


class MalformedRecord(MixscanError):
    pass


class IngestError(MixscanError):
    """Raised when a well-formed block cannot be added to a ledger."""

    def __init__(self, message: str, txid: str | None = None):
        super().__init__(message)
        self.txid = txid


class DanglingInput(IngestError):
    pass


class DoubleSpend(IngestError):
    pass


class OutOfOrder(IngestError):
    pass


class DuplicateTxid(IngestError):
    pass


class NegativeFee(IngestError):
    pass


class UnknownOutpoint(MixscanError):
    pass


class UnknownTransaction(MixscanError):
    pass


class UnresolvableInput(MixscanError):
    pass


class SeedNotFound(MixscanError):
    pass


class CycleDetected(MixscanError):
    pass


class ChainTooShort(MixscanError):
    pass


class SweeperNotFound(MixscanError):
    pass


class NotASweeper(MixscanError):
    pass


class ScenarioInfeasible(MixscanError):
    pass


class ParamsError(MixscanError):
    """Bad key or value in a params/config file."""
