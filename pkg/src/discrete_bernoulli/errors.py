"""Exception hierarchy shared by every module."""


class BernoulliError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateGeometry(BernoulliError):
    pass


class EmptyAnnulus(BernoulliError):
    """The ring between the inner and outer body is thinner than three grid steps."""


class LevelNotPresent(BernoulliError):
    pass


class OutOfRange(BernoulliError):
    pass


class LambdaTooLarge(BernoulliError):
    """No admissible set exists for the requested distance."""


class GridTooCoarse(BernoulliError):
    pass


class NonConvergence(BernoulliError):
    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class ConfigError(BernoulliError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line
