import argparse
import logging
import os
import shutil
import sys
from typing import List, Optional

from rich.console import Console
from rich.table import Table

from fslsim import __version__
from fslsim._settings import settings
from fslsim.actors import SCHEDULER_MODES, FSLDriver, load_scenario_data
from fslsim.data import partition
from fslsim.ledger import LedgerError, export_ledger, export_metrics_csv
from fslsim.store import OffchainStore

from ._config import ARTIFACTS, ConfigError, RunConfig, RunManifest, load_scenario
from ._report import build_report, render_report
from ._verify import SUITES, SuiteResult

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PROTOCOL = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3

MAX_PRINTED_COUNTEREXAMPLES = 20


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "epochs": getattr(args, "epochs", None),
        "clients": getattr(args, "clients", None),
        "seed": getattr(args, "seed", None),
        "alpha": getattr(args, "alpha", None),
        "out": getattr(args, "out", None),
        "scheduler": getattr(args, "scheduler", None),
    }


def _clear_run_dir(run: RunConfig):
    for artifact in ARTIFACTS:
        path = run.path(artifact)
        if os.path.isdir(path):
            shutil.rmtree(path)
        elif os.path.exists(path):
            os.remove(path)


def _load_data(run: RunConfig):
    try:
        return load_scenario_data(run.scenario)
    except (OSError, TypeError, ValueError) as error:
        raise ConfigError(
            "cannot load dataset '{}': {}".format(run.scenario.dataset, error)
        ) from error


def cmd_run(args: argparse.Namespace) -> int:
    run = load_scenario(args.config, _overrides(args))
    os.makedirs(run.out_dir, exist_ok=True)
    if args.force:
        _clear_run_dir(run)
    manifest = RunManifest.for_run(run, __version__, source=args.config)
    manifest.write(run.path("manifest"))
    logger.info("Run {} writing to {}".format(manifest.run_id, run.out_dir))

    train_set, test_set = _load_data(run)
    audit = OffchainStore(run.path("blobs")) if run.audit_blobs else None
    driver = FSLDriver(
        run.scenario,
        train_set,
        test_set,
        store=OffchainStore(),
        audit=audit,
        silent=args.no_progress,
    )
    try:
        try:
            driver.setup()
        except LedgerError:
            raise
        except ValueError as error:
            raise ConfigError(str(error)) from error
        result = driver.run_training()
        history = driver.network.ledger.metrics_history()
    finally:
        driver.close()

    result.metrics.to_csv(run.path("metrics"), index=False)
    result.rounds.to_csv(run.path("rounds"), index=False)
    export_ledger(result.records, run.path("ledger"))
    export_metrics_csv(history, run.path("ledger_metrics"))
    logger.info(
        "Finished {} epochs: accuracy {:.4f}, global model {} at height {}.".format(
            len(result.metrics),
            result.final_accuracy,
            result.final_record.global_hash,
            result.ledger_metrics.height,
        )
    )
    return EXIT_OK


def _suite_kwargs(name: str, args: argparse.Namespace) -> dict:
    kwargs = {"silent": args.no_progress}
    if name == "privacy" and args.run_dir is not None:
        kwargs["run_dir"] = args.run_dir
    if name == "consensus":
        kwargs["max_participants"] = args.max_participants
        kwargs["through_contract"] = not args.predicate_only
    if name == "equivalence":
        kwargs["draws"] = args.draws
    return kwargs


def _print_results(results: List[SuiteResult], console: Console):
    table = Table(title="Verification", title_justify="left")
    for column in ("suite", "result", "checked", "summary"):
        table.add_column(column)
    for r in results:
        table.add_row(
            r.suite,
            "[green]pass[/green]" if r.passed else "[red]FAIL[/red]",
            str(r.checked),
            r.summary,
        )
    console.print(table)
    for r in results:
        if r.passed:
            continue
        frame = r.counterexample_frame()
        console.print("Counterexamples for {} ({} total):".format(r.suite, len(frame)))
        console.print(frame.head(MAX_PRINTED_COUNTEREXAMPLES).to_string(index=False))


def cmd_verify(args: argparse.Namespace) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in names:
        logger.info("Running {} suite.".format(name))
        results.append(SUITES[name](**_suite_kwargs(name, args)))
    _print_results(results, Console())
    if args.dump is not None:
        os.makedirs(args.dump, exist_ok=True)
        for r in results:
            if not r.passed:
                path = os.path.join(args.dump, "{}-counterexamples.csv".format(r.suite))
                r.counterexample_frame().to_csv(path, index=False)
                logger.info("Wrote {}".format(path))
    failed = [r.suite for r in results if not r.passed]
    if failed:
        logger.error("Verification failed: {}".format(", ".join(failed)))
        return EXIT_VERIFY
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    report = build_report(args.run_dir)
    render_report(report, Console())
    if args.csv is not None:
        report.to_frame().to_csv(args.csv, index=False)
        logger.info("Wrote {}".format(args.csv))
    return EXIT_OK


def cmd_partition(args: argparse.Namespace) -> int:
    run = load_scenario(args.config, _overrides(args))
    train_set, _ = _load_data(run)
    scenario = run.scenario
    try:
        split = partition(
            train_set, scenario.n_clients, scenario.partition, scenario.alpha, scenario.seed
        )
    except ValueError as error:
        raise ConfigError(str(error)) from error
    histogram = split.histogram()
    if args.csv is None:
        histogram.to_csv(sys.stdout)
    else:
        histogram.to_csv(args.csv)
        logger.info("Wrote {}".format(args.csv))
    return EXIT_OK


def _scenario_flags(p: argparse.ArgumentParser, out_help: str):
    p.add_argument("config", help="Scenario TOML file.")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--clients", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None, help="Dirichlet concentration.")
    p.add_argument("--scheduler", choices=SCHEDULER_MODES, default=None)
    p.add_argument("--out", default=None, help=out_help)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fslsim",
        description="Federated split learning on a simulated permissioned ledger.",
    )
    ap.add_argument("--version", action="version", version="%(prog)s " + __version__)
    ap.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")
    ap.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only.")
    ap.add_argument("--no-progress", action="store_true", help="Hide progress bars.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="Train a scenario and write its artifacts.")
    _scenario_flags(p, "Run directory; overrides [output] dir.")
    p.add_argument("--force", action="store_true", help="Replace artifacts of a previous run.")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="Run an invariant suite.")
    p.add_argument("suite", choices=sorted(SUITES) + ["all"])
    p.add_argument("--run-dir", default=None, help="Scan this run (privacy suite).")
    p.add_argument("--max-participants", type=int, default=15)
    p.add_argument(
        "--predicate-only", action="store_true", help="Skip the contract cycles (consensus)."
    )
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--dump", default=None, help="Directory for counterexample CSVs.")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="Summarize the artifacts of a run.")
    p.add_argument("run_dir")
    p.add_argument("--csv", default=None, help="Also write the summary as CSV.")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("partition", help="Per-client class counts as CSV.")
    p.add_argument("config", help="Scenario TOML file.")
    p.add_argument("--clients", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None, help="Dirichlet concentration.")
    p.add_argument("--csv", default=None, help="Output file; default stdout.")
    p.set_defaults(func=cmd_partition)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the ``fslsim`` command.

    Returns
    -------
    0 on success, 1 on a protocol failure, 2 on a configuration error and 3 when a
    verification suite fails.
    """
    args = build_parser().parse_args(argv)
    if args.verbose:
        settings.verbosity = logging.DEBUG
    elif args.quiet:
        settings.verbosity = logging.WARNING
    else:
        settings.verbosity = logging.INFO
    try:
        return args.func(args)
    except ConfigError as error:
        logger.error("Configuration error: {}".format(error))
        return EXIT_CONFIG
    except LedgerError as error:
        logger.error("Protocol failure: {}".format(error))
        return EXIT_PROTOCOL
