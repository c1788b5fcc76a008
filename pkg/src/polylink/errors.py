"""Exception hierarchy shared by all polylink modules.

Every error carries a short machine-parseable ``code`` so the CLI can emit
one-line diagnostics (``E_SPLIT: ...``) with a stable prefix.
"""


class PolylinkError(Exception):
    code = "E_INTERNAL"


class ArgumentError(PolylinkError, ValueError):
    """Invalid argument or configuration value."""

    code = "E_ARGS"


class ContractError(PolylinkError):
    """Shape/type mismatch between cooperating components."""

    code = "E_CONTRACT"


class GraphLookupError(PolylinkError, LookupError):
    """Unknown node, relation, or identifier."""

    code = "E_LOOKUP"


class SplitError(PolylinkError):
    """Edge splitting cannot satisfy its contract."""

    code = "E_SPLIT"


class NumericError(PolylinkError):
    """Non-finite value produced where a finite one is required."""

    code = "E_NUMERIC"


class FormatError(PolylinkError):
    """Malformed input file."""

    code = "E_FORMAT"


class CheckpointError(PolylinkError):
    """Missing or inconsistent checkpoint."""

    code = "E_CHECKPOINT"


class NoCheckpointError(CheckpointError):
    code = "E_NO_CHECKPOINT"


class UndefinedMetricError(PolylinkError):
    """Metric undefined for the given scored set (single-class input)."""

    code = "E_METRIC"


class GenerationError(PolylinkError):
    """Synthetic data generation failed to meet its calibration target."""

    code = "E_DATAGEN"
