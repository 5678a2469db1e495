"""Exception hierarchy.

Every error carries a short ``category`` string; the command-line front end
prints it as a machine-parsable prefix (``error[<category>]: ...``).
"""


class AnchorLSTMError(Exception):
    category = "error"


class ShapeError(AnchorLSTMError, ValueError):
    category = "shape"


class DomainError(AnchorLSTMError, ValueError):
    category = "domain"


class ContractError(AnchorLSTMError, ValueError):
    category = "contract"


class InputError(AnchorLSTMError, ValueError):
    category = "input"


class ConfigError(AnchorLSTMError, ValueError):
    category = "config"


class DataError(AnchorLSTMError, ValueError):
    category = "data"


class SchemaError(DataError):
    category = "schema"


class TrainingError(AnchorLSTMError, RuntimeError):
    category = "training"


class EvaluationError(AnchorLSTMError, ArithmeticError):
    category = "evaluation"


class ArchiveError(AnchorLSTMError, IOError):
    category = "archive"


class VersionError(ArchiveError):
    category = "version"
