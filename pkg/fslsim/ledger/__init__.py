from ._exceptions import (
    AccessDeniedError,
    ChaincodeError,
    EndorsementError,
    LedgerError,
    MembershipError,
    TransientKeyError,
)
from ._export import (
    METRICS_COLUMNS,
    export_ledger,
    export_metrics_csv,
    ledger_file_bytes,
    metrics_frame,
    read_ledger,
)
from ._ledger import ChaincodeStub, EventStream, Ledger, bootstrap_network
from ._scan import Leak, find_fragment_leaks, find_value_leaks
from ._types import (
    EndorsementPolicy,
    Event,
    Identity,
    LedgerMetrics,
    MspId,
    PdcDefinition,
    PolicyKind,
    PrivateWrite,
    Role,
    TransactionProposal,
    TransactionRecord,
    TxStatus,
    WriteEntry,
)

__all__ = [
    "AccessDeniedError",
    "ChaincodeError",
    "ChaincodeStub",
    "EndorsementError",
    "EndorsementPolicy",
    "Event",
    "EventStream",
    "Identity",
    "Leak",
    "Ledger",
    "LedgerError",
    "LedgerMetrics",
    "METRICS_COLUMNS",
    "MembershipError",
    "MspId",
    "PdcDefinition",
    "PolicyKind",
    "PrivateWrite",
    "Role",
    "TransactionProposal",
    "TransactionRecord",
    "TransientKeyError",
    "TxStatus",
    "WriteEntry",
    "bootstrap_network",
    "export_ledger",
    "export_metrics_csv",
    "find_fragment_leaks",
    "find_value_leaks",
    "ledger_file_bytes",
    "metrics_frame",
    "read_ledger",
]
