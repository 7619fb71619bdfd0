from ._config import (
    ARTIFACTS,
    ConfigError,
    RunConfig,
    RunManifest,
    load_scenario,
    parse_scenario,
)
from ._main import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_PROTOCOL,
    EXIT_VERIFY,
    build_parser,
    cmd_partition,
    cmd_report,
    cmd_run,
    cmd_verify,
    main,
)
from ._report import RunReport, build_report, ledger_summary, render_report
from ._verify import (
    SUITES,
    SuiteResult,
    contract_cycle,
    privacy_scenario,
    verify_consensus,
    verify_equivalence,
    verify_gradients,
    verify_privacy,
)

__all__ = [
    "ARTIFACTS",
    "ConfigError",
    "EXIT_CONFIG",
    "EXIT_OK",
    "EXIT_PROTOCOL",
    "EXIT_VERIFY",
    "RunConfig",
    "RunManifest",
    "RunReport",
    "SUITES",
    "SuiteResult",
    "build_parser",
    "build_report",
    "cmd_partition",
    "cmd_report",
    "cmd_run",
    "cmd_verify",
    "contract_cycle",
    "ledger_summary",
    "load_scenario",
    "main",
    "parse_scenario",
    "privacy_scenario",
    "render_report",
    "verify_consensus",
    "verify_equivalence",
    "verify_gradients",
    "verify_privacy",
]
