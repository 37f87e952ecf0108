import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from .progress import ProgressReporter


class CLILogger:
    """Logging for pipeline stages: stderr plus a per-run log file."""

    def __init__(self, config_manager=None, log_dir: Optional[Path] = None):
        self.config_manager = config_manager
        self.log_dir = log_dir
        self.logger = logging.getLogger('urgentcare_absa')
        self._setup_logging()

    def _setup_logging(self):
        """Setup logging configuration."""
        # Clear any existing handlers
        self.logger.handlers.clear()

        log_level = 'info'
        if self.config_manager:
            log_level = self.config_manager.get('preferences.log_level', 'info')

        level = getattr(logging, str(log_level).upper(), logging.INFO)
        self.logger.setLevel(logging.DEBUG)

        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)

        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        console_handler.setFormatter(formatter)
        self.logger.addHandler(console_handler)

        if self.log_dir is not None:
            try:
                self.log_dir.mkdir(parents=True, exist_ok=True)
                file_handler = logging.FileHandler(self.log_dir / 'urgentcare-absa.log', encoding='utf-8')
                file_handler.setLevel(logging.DEBUG)
                file_handler.setFormatter(formatter)
                self.logger.addHandler(file_handler)
            except OSError as e:
                self.logger.warning(f"Could not open log file in {self.log_dir}: {e}")

        # Third-party clients are chatty at INFO
        for name in ('openai', 'httpx', 'httpcore'):
            logging.getLogger(name).setLevel(logging.WARNING)

    def close(self):
        """Detach and close handlers (tests invoke many runs per process)."""
        for handler in list(self.logger.handlers):
            handler.close()
            self.logger.removeHandler(handler)

    def debug(self, message: str):
        """Log debug message."""
        self.logger.debug(message)

    def info(self, message: str):
        """Log info message."""
        self.logger.info(message)

    def warning(self, message: str):
        """Log warning message."""
        self.logger.warning(message)

    def error(self, message: str):
        """Log error message."""
        self.logger.error(message)

    def critical(self, message: str):
        """Log critical message."""
        self.logger.critical(message)


class CLIError(Exception):
    """Base exception for pipeline errors.

    Exit codes: 1 for assertion/property failures, 2 for usage and input
    errors. Subclasses default to 2.
    """

    default_exit_code = 2

    def __init__(self, message: str, exit_code: Optional[int] = None):
        super().__init__(message)
        self.exit_code = self.default_exit_code if exit_code is None else exit_code


class ConfigError(CLIError):
    """Configuration-related errors."""
    pass


class InputError(CLIError):
    """Missing or unreadable input files."""
    pass


class CorruptInputError(InputError):
    """Too many malformed records in an input file."""

    def __init__(self, message: str, malformed: int = 0, total: int = 0):
        super().__init__(message)
        self.malformed = malformed
        self.total = total


class SchemaError(InputError):
    """Input table is missing required columns."""
    pass


class ValidationError(CLIError):
    """Precondition violations on values passed to an operation."""
    pass


class ResponseParseError(ValidationError):
    """An LLM response that does not satisfy the output contract."""

    def __init__(self, message: str, reason: str = 'invalid'):
        super().__init__(message)
        self.reason = reason


class BackendError(CLIError):
    """Sentiment backend failed for a review."""

    def __init__(self, message: str, review_id: Optional[str] = None):
        super().__init__(message)
        self.review_id = review_id


class BatchAbortedError(CLIError):
    """Batch failure rate exceeded the configured threshold."""

    def __init__(self, message: str, summary: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.summary = summary or {}


class EvaluationError(CLIError):
    """Evaluation inputs are inconsistent."""
    pass


class StatsError(CLIError):
    """Statistical model cannot be fitted on the given data."""
    pass


class ZeroVarianceError(StatsError):
    """A variable has no variance."""

    def __init__(self, variable: str):
        super().__init__(f"zero variance in '{variable}'")
        self.variable = variable


class InsufficientDataError(StatsError):
    """Too few observations for the requested model."""
    pass


class CollinearityError(StatsError):
    """Design matrix is rank deficient."""

    def __init__(self, columns):
        columns = list(columns)
        super().__init__(f"design matrix is rank deficient; dependent columns: {', '.join(columns)}")
        self.columns = columns


class StageError(CLIError):
    """An upstream stage has not produced its artifacts."""
    pass


class LockError(CLIError):
    """Output directory is in use by another run."""
    pass


class PropertyCheckError(CLIError):
    """An end-to-end property check failed."""

    default_exit_code = 1


def handle_error(error: Exception, logger: Optional[CLILogger] = None, verbose: bool = False,
                 stage: Optional[str] = None):
    """Report an error as '<stage>: <message>' and exit with its code."""
    prefix = f"{stage}: " if stage else ""
    if isinstance(error, CLIError):
        message = f"{prefix}{error}"
        exit_code = error.exit_code
    else:
        message = f"{prefix}unexpected error: {error}"
        exit_code = 1

    if logger:
        logger.error(message)
    print(message, file=sys.stderr)

    if verbose:
        import traceback
        traceback.print_exc()

    sys.exit(exit_code)


def format_output(data, format_type: str = 'human'):
    """Format output for different display types."""
    if format_type == 'json':
        import json
        return json.dumps(data, indent=2, default=str, sort_keys=True)
    elif format_type == 'yaml':
        import yaml
        return yaml.safe_dump(data, default_flow_style=False, indent=2)
    else:
        if isinstance(data, dict):
            lines = []
            for key, value in data.items():
                if isinstance(value, dict):
                    lines.append(f"{key}:")
                    for sub_key, sub_value in value.items():
                        lines.append(f"  {sub_key}: {sub_value}")
                else:
                    lines.append(f"{key}: {value}")
            return '\n'.join(lines)
        elif isinstance(data, list):
            return '\n'.join(str(item) for item in data)
        else:
            return str(data)


def validate_file_path(path, label: str, must_exist: bool = True) -> Path:
    """Validate an input path; `label` names it in the error ('poi file')."""
    if path is None or str(path) == '':
        raise InputError(f"{label} not configured")
    file_path = Path(path)
    if must_exist and not file_path.exists():
        raise InputError(f"{label} not found: {path}")
    return file_path


__all__ = [
    'CLILogger', 'CLIError', 'ConfigError', 'InputError', 'CorruptInputError', 'SchemaError',
    'ValidationError', 'ResponseParseError', 'BackendError', 'BatchAbortedError',
    'EvaluationError', 'StatsError', 'ZeroVarianceError', 'InsufficientDataError',
    'CollinearityError', 'StageError', 'LockError', 'PropertyCheckError',
    'handle_error', 'format_output', 'validate_file_path', 'ProgressReporter',
]
