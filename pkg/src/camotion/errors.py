"""Exception hierarchy shared by every module and the CLI.

Each class carries a short machine-readable ``code`` that the CLI reports
in its JSON error payload.
"""


class CamotionError(Exception):
    code = "error"


class ParameterError(CamotionError, ValueError):
    code = "parameter"


class UnsupportedSizeError(ParameterError):
    code = "unsupported_size"


class DimensionError(ParameterError):
    code = "dimension"


class DegenerateInputError(CamotionError, ValueError):
    code = "degenerate_input"


class FormatError(CamotionError):
    """File content does not follow the expected layout (bad magic, version, header)."""

    code = "format"


class TruncationError(FormatError):
    """Payload length disagrees with the sizes declared in the header."""

    code = "truncation"


class ClipLoadError(CamotionError):
    code = "clip_load"


class ValidationError(CamotionError, ValueError):
    code = "validation"


class DivergenceError(CamotionError, ArithmeticError):
    code = "divergence"


class SchemaError(CamotionError):
    code = "schema"
