class LedgerError(Exception):
    """Base class for errors raised by the ledger and the chaincode running on it."""


class MembershipError(LedgerError):
    """Channel membership or network configuration violation."""


class EndorsementError(LedgerError):
    """The endorsement policy of a function is not satisfied."""


class AccessDeniedError(LedgerError, PermissionError):
    """A private data collection policy rejected a read or a write."""

    def __init__(self, collection: str, msp: str, operation: str):
        self.collection = collection
        self.msp = msp
        self.operation = operation
        super().__init__(
            "access denied: {} may not {} collection '{}'".format(
                msp, operation, collection
            )
        )


class TransientKeyError(LedgerError, KeyError):
    def __str__(self):
        return "transient key missing: {}".format(self.args[0] if self.args else "")


class ChaincodeError(LedgerError, ValueError):
    """A contract rule rejected the invocation."""
