"""Exception hierarchy shared by all modules."""


class LidarOdomError(Exception):
    """Base class for all library errors."""


class InvalidInputError(LidarOdomError, ValueError):
    """An argument violates an operation's precondition."""


class DegeneratePlaneError(LidarOdomError, ValueError):
    """Plane points are collinear or the seed covariance has rank < 2."""


class InsufficientConstraintsError(LidarOdomError):
    """Too few correspondences to constrain an optimization step."""

    def __init__(self, step: str, found: int, required: int):
        self.step = step
        self.found = found
        self.required = required
        super().__init__(f"{step}: {found} correspondences, need at least {required}")


class ParseError(LidarOdomError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f"{':' if where else ''}line {line}"
        super().__init__(f"{where}: {message}" if where else message)
