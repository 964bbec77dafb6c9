import sys
import traceback
from typing import List

from lcpformer.commands import run_command
from lcpformer.errors import LcpStopHereError, LcpValidationError
from lcpformer.logs import LcpLogger, logging_setup
from lcpformer.parser import LcpParser

# Exit codes
RC_OK = 0
RC_VALIDATION = 1
RC_RUNTIME = 2


def error_line(e: Exception) -> str:
    kind = getattr(e, "kind", "runtime-error")
    message = "; ".join(line for line in str(e).split("\n") if line)
    return f"lcpformer: {kind}: {message}"


# CLI entry point
def lcpformer(argv: List[str]) -> int:
    out = RC_OK
    try:
        # Parse input args, then run the command
        args = LcpParser().parse(argv)
        logging_setup(args)
        run_command(args)
    except Exception as e:
        if not isinstance(e, LcpStopHereError):
            list(map(LcpLogger.error, str(e).split("\n")))
            list(map(LcpLogger.debug, "".join(traceback.format_tb(e.__traceback__)).split("\n")))
            sys.stderr.write(error_line(e) + "\n")
            out = RC_VALIDATION if isinstance(e, LcpValidationError) else RC_RUNTIME
    return out


def main() -> int:  # pragma: no cover
    return lcpformer(sys.argv[1:])


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
