from ._chaincode import (
    DEFAULT_CONSENSUS,
    FSLContract,
    consensus_reached,
    endorsement_quorum,
    fsl_collections,
    fsl_policies,
)
from ._gateway import FSLGateway, FSLNetwork, bootstrap_fsl_network
from ._records import (
    AggregationTask,
    ClientModelHashRecord,
    ClientRecord,
    GlobalModelRecord,
    IntermediateKind,
    IntermediateNotice,
    IntermediateRef,
    MemberHash,
    ModelMeta,
    ServerRecord,
    TaskStatus,
    decode_member_hashes,
    encode_member_hashes,
)

__all__ = [
    "AggregationTask",
    "ClientModelHashRecord",
    "ClientRecord",
    "DEFAULT_CONSENSUS",
    "FSLContract",
    "FSLGateway",
    "FSLNetwork",
    "GlobalModelRecord",
    "IntermediateKind",
    "IntermediateNotice",
    "IntermediateRef",
    "MemberHash",
    "ModelMeta",
    "ServerRecord",
    "TaskStatus",
    "bootstrap_fsl_network",
    "consensus_reached",
    "decode_member_hashes",
    "encode_member_hashes",
    "endorsement_quorum",
    "fsl_collections",
    "fsl_policies",
]
