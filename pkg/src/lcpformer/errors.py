class LcpError(Exception):
    """Runtime failure (CLI exit code 2)"""

    kind = "runtime-error"


class LcpShapeError(LcpError):
    kind = "shape-error"

    def __init__(self, operation: str, *shapes: tuple):
        super().__init__(f"{operation}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}")


class LcpNonFiniteError(LcpError):
    kind = "non-finite"


class LcpIndexError(LcpError):
    kind = "index-error"


class LcpFormatError(LcpError):
    kind = "format-error"

    def __init__(self, path: object, message: str):
        super().__init__(f"While reading {path}: {message}")


class LcpGradCheckError(LcpError):
    kind = "gradcheck-failed"


class LcpValidationError(Exception):
    """Invalid user input (CLI exit code 1)"""

    kind = "validation-error"


class LcpConfigError(LcpValidationError):
    kind = "config-error"


class LcpStopHereError(Exception):
    pass
