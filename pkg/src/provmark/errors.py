"""Exception hierarchy shared across the toolkit.

Every error that should surface as a process exit code carries one in
``exit_code`` so the CLI and the service can translate uniformly:

    0  success
    2  verification rejected the sample
    3  calibration artifacts missing or incomplete
    4  malformed file / bad parameters
    5  provenance metadata does not match the configured pipeline
"""

EXIT_OK = 0
EXIT_REJECTED = 2
EXIT_CALIBRATION_MISSING = 3
EXIT_FORMAT = 4
EXIT_PROVENANCE = 5


class ProvmarkError(Exception):
    """Base class; concrete subclasses set ``exit_code``."""

    exit_code = 1


class ParameterError(ProvmarkError):
    """Invalid argument values (shapes, ranges, unknown names)."""

    exit_code = EXIT_FORMAT


class FormatError(ProvmarkError):
    """File on disk is not in the expected binary or JSON layout."""

    exit_code = EXIT_FORMAT


class CalibrationMissingError(ProvmarkError):
    """An operation needs calibrated models that are not available."""

    exit_code = EXIT_CALIBRATION_MISSING


class ProvenanceError(ProvmarkError):
    """Sidecar metadata disagrees with the pipeline configuration."""

    exit_code = EXIT_PROVENANCE


class UnknownUserError(ProvmarkError):
    """Requested user id has no registered key."""

    exit_code = EXIT_FORMAT
