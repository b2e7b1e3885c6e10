"""Exception hierarchy shared by every stage of the pipeline."""


class CVSEError(Exception):
    """Base class. ``code`` is the machine-parsable tag the CLI prints."""

    code = "CVSE_ERROR"


class ShapeError(CVSEError, ValueError):
    code = "SHAPE_ERROR"


class ParameterError(CVSEError, ValueError):
    code = "PARAMETER_ERROR"


class DegenerateInputError(CVSEError, ValueError):
    code = "DEGENERATE_INPUT"


class InsufficientVocabularyError(CVSEError, ValueError):
    code = "INSUFFICIENT_VOCABULARY"


class InsufficientBatchError(CVSEError, ValueError):
    code = "INSUFFICIENT_BATCH"


class ParseError(CVSEError, ValueError):
    code = "PARSE_ERROR"


class DataIntegrityError(CVSEError, ValueError):
    code = "DATA_INTEGRITY"


class ConfigError(CVSEError, ValueError):
    code = "CONFIG_INVALID"

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
