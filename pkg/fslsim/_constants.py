class _CONSTANTS:
    # transient map keys
    TRANSIENT_DATA_KEY = "data"
    TRANSIENT_CID_KEY = "cid"

    # private data collections
    INTERMEDIATE_COLLECTION = "intermediateDataHashCollection"
    CLIENT_MODEL_COLLECTION = "clientModelHashCollection"
    GLOBAL_MODEL_COLLECTION = "globalModelHashCollection"

    # events
    MODEL_PUBLISHED = "ModelPublished"
    INTERMEDIATE_ADDED = "IntermediateDataAdded"
    GRADIENT_ADDED = "GradientAdded"
    AGGREGATION_START = "AggregationTaskStart"
    GLOBAL_MODEL_UPDATED = "GlobalModelUpdated"
    AGGREGATION_FAILED = "AggregationFailed"

    # intermediate data kinds
    ACTIVATION = "activation"
    GRADIENT = "gradient"

    # main ledger key for the current global model pointer
    GLOBAL_CURRENT_KEY = "global/current"

    CID_LENGTH = 46
    TRANSIENT_LIMIT = 512 * 1024
    STORE_DIR_ENV = "FSLSIM_STORE_DIR"
