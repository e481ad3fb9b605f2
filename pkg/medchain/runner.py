import os
import sys
import queue
import logging
import logging.handlers
import argparse
from time import strftime
from logging.config import fileConfig
import yaml
import medchain
import medchain.lib.util.config as config
import medchain.lib.util.exception as exceptions
import medchain.lib.provenance.audit as audit
from medchain.ledger import Address, read_chain, verify_chain
from medchain.lib.crypto.keys import SeededEntropy, keygen
from medchain.lib.harness import Scenario, PreBenchmark, LedgerBenchmark, write_report
from medchain.lib.util.config import TMP_LOG_PATH, FORMAT, RESPONSE_LOGGER

BASE_DIR = os.path.dirname(__file__)
"""Path to the directory this file is contained in"""

LOGGER_CONFIG_PATH = os.path.join(BASE_DIR, 'data', 'default-logger.config')

COMMANDS = ('keygen', 'run', 'audit', 'verify', 'bench-pre', 'bench-ledger')


###################
# Logging
###################
def clear_log(file_path, log_name):
    """If found rename the log at file_path to e.g. 'run_TIME.log'.

    :param file_path: log file path
    :type file_path: str
    :param log_name: Name prefix of the log (current time will be appended)
    :type log_name: str
    :return: None
    """
    if os.path.isfile(file_path):
        directory = os.path.dirname(file_path)
        old_mask = os.umask(config.DEFAULT_LOG_UMASK)
        os.rename(file_path, "%s/%s_%s.log" % (directory, log_name, strftime("%H-%M-%S")))
        os.umask(old_mask)


def ensure_dir(file_path, mask=0o777):
    """If not already existing, recursively create parent directory of file_path.

    :param file_path: log file path
    :type file_path: str
    :param mask: Umask to create directories with.
    :type mask: int
    :return: None
    """
    directory = os.path.dirname(file_path)
    if directory and not os.path.exists(directory):
        prev_mask = os.umask(mask)
        os.makedirs(directory)
        os.umask(prev_mask)


def setup_logging(command, log_name):
    """Configure the console loggers and add a rotating file log for ``command``.

    :return: Path of the file log
    :rtype: str
    """
    if os.path.isfile(LOGGER_CONFIG_PATH):
        fileConfig(LOGGER_CONFIG_PATH, disable_existing_loggers=False)
    log_file_path = '%s/%s/%s.log' % (TMP_LOG_PATH, command, log_name)
    ensure_dir(log_file_path, mask=config.DEFAULT_LOG_UMASK)
    clear_log(log_file_path, log_name)
    handler = logging.handlers.RotatingFileHandler(log_file_path, 'w')
    handler.setFormatter(logging.Formatter(FORMAT))
    logging.getLogger().addHandler(handler)
    return log_file_path


def _drain(event_queue, logger):
    while not event_queue.empty():
        logger.debug(str(event_queue.get_nowait()))


###################
# Commands
###################
def cmd_keygen(args, clilogger):
    """Write a key file holding role, address and both keys (hex)."""
    logger = logging.getLogger(__name__)
    entropy = SeededEntropy(bytes.fromhex(args.seed)) if args.seed else None
    secret_key, public_key = keygen(entropy)
    document = {
        'role': args.role,
        'address': Address.from_public_key(public_key).hex(),
        'public_key': bytes(public_key).hex(),
        'secret_key': secret_key.to_secret_bytes().hex(),
    }
    ensure_dir(args.out)
    with open(args.out, 'w') as key_file:
        yaml.safe_dump(document, key_file, default_flow_style=False, sort_keys=False)
    os.chmod(args.out, 0o600)
    logger.debug("Key file written to '%s'" % args.out)
    clilogger.info("%s key %s (address %s) written to '%s'" % (args.role, document['public_key'],
                                                              document['address'], args.out))
    return config.ExitStatus.FINE


def cmd_run(args, clilogger):
    """Run a scenario, export its chain and check that the export verifies."""
    logger = logging.getLogger(__name__)
    scenario = Scenario.from_file(args.scenario)
    events = queue.Queue()
    scenario.ledger.add_subscriber(events)
    chain_out = args.chain_out or '%s.chain' % os.path.splitext(args.scenario)[0]
    status = config.ExitStatus.FINE
    try:
        outcome = scenario.run()
    except exceptions.ScenarioAssertionException as err:
        logger.error(err.message)
        outcome = scenario.outcome()
        status = config.ExitStatus.ASSERTION_MISMATCH
    finally:
        _drain(events, logger)
        scenario.ledger.remove_subscriber(events)

    ensure_dir(chain_out)
    scenario.ledger.export_chain(chain_out)
    verdict = verify_chain(read_chain(chain_out))
    if not verdict.valid:
        logger.error("Exported chain does not verify: %s" % verdict)
        if status is config.ExitStatus.FINE:
            status = config.ExitStatus.CHAIN_INVALID
    if args.report_out:
        write_report(outcome, args.report_out)
    clilogger.info(outcome.render())
    clilogger.info("Chain written to '%s' (%s)" % (chain_out, verdict))
    return status


def cmd_verify(args, clilogger):
    verdict = verify_chain(read_chain(args.chain))
    clilogger.info("%s: %s" % (args.chain, verdict))
    return config.ExitStatus.FINE if verdict.valid else config.ExitStatus.CHAIN_INVALID


def cmd_audit(args, clilogger):
    """Verify the chain, then print the lineage of a prescription."""
    logger = logging.getLogger(__name__)
    snapshot = read_chain(args.chain)
    verdict = verify_chain(snapshot)
    if not verdict.valid:
        logger.error("Refusing to audit '%s': %s" % (args.chain, verdict))
        return config.ExitStatus.CHAIN_INVALID
    try:
        record = audit.lineage(snapshot, bytes.fromhex(args.instance))
    except ValueError:
        logger.error("Instance id '%s' is not hex" % args.instance)
        return config.ExitStatus.UNKNOWN_INSTANCE
    except exceptions.UnknownInstanceException as err:
        logger.error(err.message)
        return config.ExitStatus.UNKNOWN_INSTANCE
    clilogger.info(audit.render_lineage_report(record))
    if args.out:
        audit.dump_lineage(record, args.out)
    return config.ExitStatus.FINE


def cmd_bench_pre(args, clilogger):
    logger = logging.getLogger(__name__)
    benchmark = PreBenchmark(args.profile, args.iterations, bytes.fromhex(args.seed) if args.seed else None,
                             args.trace_memory)
    benchmark.run()
    benchmark.write(args.out)
    for row in benchmark.summary():
        clilogger.info('%-9s %-3s n=%-5s min %9.3f  max %9.3f  avg %9.3f  std %8.3f ms (reference %s ms)' % row)
    for row in benchmark.violations():
        logger.warning("%s %s exceeds the latency bound: avg %s ms, max %s ms" % (row[0], row[1], row[5], row[4]))
    return config.ExitStatus.FINE


def cmd_bench_ledger(args, clilogger):
    interval = args.interval
    if interval is None:
        interval = config.BLOCK_INTERVAL_PROFILES[args.profile]
    benchmark = LedgerBenchmark(args.n_txs, interval, args.seed)
    benchmark.run()
    benchmark.write(args.out)
    for statistic, value in benchmark.summary():
        clilogger.info('%-14s %12.3f ms' % (statistic, value))
    return config.ExitStatus.FINE


HANDLERS = {
    'keygen': cmd_keygen,
    'run': cmd_run,
    'audit': cmd_audit,
    'verify': cmd_verify,
    'bench-pre': cmd_bench_pre,
    'bench-ledger': cmd_bench_ledger,
}


def build_parser():
    parser = argparse.ArgumentParser(prog='medchain', description='E-prescription data governance on a simulated '
                                                                   'blockchain with proxy re-encryption')
    parser.add_argument('-v', '--version', action='version', version='%(prog)s ' + medchain.__version__)
    subparsers = parser.add_subparsers(dest='cmd')
    subparsers.required = True

    subparser_keygen = subparsers.add_parser('keygen', help='Generate a stakeholder key pair')
    subparser_keygen.add_argument('--verbose', action='store_true')
    subparser_keygen.add_argument('--seed', help='Hex seed for a deterministic key', default=None)
    subparser_keygen.add_argument('--role', choices=[role.value for role in config.Role],
                                  default=config.Role.PATIENT.value)
    subparser_keygen.add_argument('--out', '-o', help='Key file to write', required=True)

    subparser_run = subparsers.add_parser('run', help='Run a scenario file and assert every expected outcome')
    subparser_run.add_argument('--verbose', action='store_true')
    subparser_run.add_argument('scenario', help='YAML scenario file, see data/scenarios/README.md')
    subparser_run.add_argument('--chain-out', help='Chain file to export (default: next to the scenario)')
    subparser_run.add_argument('--report-out', help='YAML outcome report to write')

    subparser_audit = subparsers.add_parser('audit', help='Reconstruct the lineage of a prescription')
    subparser_audit.add_argument('--verbose', action='store_true')
    subparser_audit.add_argument('chain', help='Exported chain file')
    subparser_audit.add_argument('instance', help='Prescription instance id (hex)')
    subparser_audit.add_argument('--out', help='Prefix for the .txt report and the .yaml record')

    subparser_verify = subparsers.add_parser('verify', help='Verify an exported chain by replay')
    subparser_verify.add_argument('--verbose', action='store_true')
    subparser_verify.add_argument('chain', help='Exported chain file')

    subparser_pre = subparsers.add_parser('bench-pre', help='Time the proxy re-encryption steps')
    subparser_pre.add_argument('--verbose', action='store_true')
    subparser_pre.add_argument('--profile', choices=sorted(config.BENCH_PROFILES), default='quick')
    subparser_pre.add_argument('--iterations', type=int, default=None,
                               help='Override the iteration count of the profile')
    subparser_pre.add_argument('--seed', help='Hex seed for sizes, keys and plaintexts', default=None)
    subparser_pre.add_argument('--trace-memory', action='store_true', help='Record tracemalloc peaks')
    subparser_pre.add_argument('--out', '-o', help='CSV file to write', required=True)

    subparser_ledger = subparsers.add_parser('bench-ledger', help='Simulated inclusion latency of create_prescription')
    subparser_ledger.add_argument('--verbose', action='store_true')
    subparser_ledger.add_argument('--n-txs', type=int, default=300)
    interval_mutex = subparser_ledger.add_mutually_exclusive_group()
    interval_mutex.add_argument('--interval', type=int, default=None, metavar='MS', help='Block interval in ms')
    interval_mutex.add_argument('--profile', choices=sorted(config.BLOCK_INTERVAL_PROFILES), default='juno')
    subparser_ledger.add_argument('--seed', type=int, default=0)
    subparser_ledger.add_argument('--out', '-o', help='CSV file to write', required=True)
    return parser


def main(argv=None):
    """Parse the command line arguments and run the chosen command.

    :return: None, exits with a ``config.ExitStatus`` code
    """
    args = build_parser().parse_args(argv)
    if args.verbose:
        config.DEFAULT_LOG_LEVEL = logging.DEBUG
    setup_logging(args.cmd, args.cmd.replace('-', '_'))
    logger = logging.getLogger(__name__)
    logger.setLevel(config.DEFAULT_LOG_LEVEL)
    logger.debug(args)
    clilogger = logging.getLogger(RESPONSE_LOGGER)
    clilogger.setLevel(logging.INFO)

    try:
        status = HANDLERS[args.cmd](args, clilogger)
    except IOError as err:
        logger.critical("File not found: %s" % (err.filename or err))
        status = config.ExitStatus.FILE_NOT_FOUND
    except exceptions.ScenarioParseException as err:
        logger.critical("Scenario is malformed: %s" % err.message)
        status = config.ExitStatus.SCENARIO_PARSING_ERROR
    except exceptions.ConfigurationException as err:
        logger.critical(err.message)
        status = config.ExitStatus.ERRONEUS_CONFIG
    except ValueError as err:
        logger.critical("Invalid argument: %s" % err)
        status = config.ExitStatus.ERRONEUS_CONFIG
    sys.exit(status.value)
