"""
Structured JSON logging for library code, the CLI and the Monte Carlo harness.

This module provides:
- CustomJsonFormatter: Formats logs as JSON with standard fields
- setup_logging: Configures process-wide logging
- LogContext: Context manager for stamping contextual fields on every record
"""

import logging
import sys
import traceback
from datetime import datetime, timezone

from pythonjsonlogger import jsonlogger

# Context fields nested under "run"
RUN_FIELDS = ("command", "experiment", "replication", "duration_ms")


class CustomJsonFormatter(jsonlogger.JsonFormatter):
    """
    JSON formatter that adds standard fields to all log records.

    Standard fields added to every log:
    - timestamp: ISO 8601 format
    - level: Log level name (INFO, WARNING, ERROR, etc.)
    - logger: Logger name
    - message: Log message
    - source: Module, function, and line number

    Run context (from extra or LogContext) is nested under "run":
    - command: CLI subcommand being run
    - experiment: Experiment name from the config file
    - replication: Replication index inside a Monte Carlo run
    - duration_ms: Wall-clock duration of a timed step
    """

    def add_fields(self, log_record, record, message_dict):
        """Add custom fields to log record"""
        super().add_fields(log_record, record, message_dict)

        if not log_record.get('timestamp'):
            log_record['timestamp'] = datetime.now(timezone.utc).isoformat()

        if log_record.get('level'):
            log_record['level'] = log_record['level'].upper()
        else:
            log_record['level'] = record.levelname

        log_record['logger'] = record.name

        log_record['source'] = {
            'module': record.module,
            'function': record.funcName,
            'line': record.lineno
        }

        run = {key: getattr(record, key) for key in RUN_FIELDS if hasattr(record, key)}
        if run:
            for key in run:
                log_record.pop(key, None)
            log_record['run'] = run

        if record.exc_info:
            log_record['exception'] = {
                'type': record.exc_info[0].__name__,
                'message': str(record.exc_info[1]),
                'stacktrace': traceback.format_exception(*record.exc_info)
            }


def setup_logging(log_level: str = "INFO", log_format: str = "json") -> logging.Logger:
    """
    Configure process logging.

    Logs go to stderr so that CSV or key-value output written to stdout by
    the CLI stays machine readable.

    Args:
        log_level: Minimum log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_format: "json" for structured records, "plain" for one-line text

    Returns:
        Configured root logger

    Example:
        logger = setup_logging(log_level="INFO")
        logger.info("Experiment started")
    """
    handler = logging.StreamHandler(sys.stderr)

    if log_format == "json":
        formatter = CustomJsonFormatter('%(timestamp)s %(level)s %(logger)s %(message)s')
    else:
        formatter = logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s')
    handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, log_level.upper()))

    # Remove existing handlers to avoid duplicates
    root_logger.handlers = []
    root_logger.addHandler(handler)

    # Route warnings.warn through logging as well
    logging.captureWarnings(True)

    # Keep third-party records out of the JSON stream
    logging.getLogger('joblib').setLevel(logging.WARNING)

    return root_logger


class LogContext:
    """
    Context manager for adding contextual information to all log records.

    Usage:
        with LogContext(command="bench", experiment="table2"):
            logger.info("Running replications")
            # All logs in this block carry command and experiment

    Worker processes do not inherit the record factory, so harness code
    re-enters a LogContext inside each replication.
    """

    def __init__(self, **context):
        self.context = context
        self.old_factory = None

    def __enter__(self):
        self.old_factory = logging.getLogRecordFactory()

        def record_factory(*args, **kwargs):
            record = self.old_factory(*args, **kwargs)
            for key, value in self.context.items():
                setattr(record, key, value)
            return record

        logging.setLogRecordFactory(record_factory)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        logging.setLogRecordFactory(self.old_factory)
