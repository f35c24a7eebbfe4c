"""Exception types shared across the package."""


class MtsentError(Exception):
    """Base class for all errors raised by mtsent."""


class MalformedLine(MtsentError):
    def __init__(self, line: int, message: str = "expected at least 3 tab-separated fields"):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UnknownLabel(MtsentError):
    def __init__(self, line: int, token: str):
        self.line = line
        self.token = token
        super().__init__(f"line {line}: unknown label {token!r}")


class ZeroClassCount(MtsentError):
    def __init__(self, cls: int):
        self.cls = cls
        super().__init__(f"class {cls} has zero examples")


class DimensionMismatch(MtsentError):
    def __init__(self, line: int | None = None, message: str = "dimension mismatch"):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class LexiconLoadError(MtsentError):
    def __init__(self, name: str, reason: str = ""):
        self.name = name
        super().__init__(f"cannot load lexicon {name!r}" + (f": {reason}" if reason else ""))


class ShapeMismatch(MtsentError):
    pass


class EmptySequence(MtsentError):
    pass


class DisconnectedTape(MtsentError):
    pass


class MissingExtraFeatures(MtsentError):
    pass


class UnknownTask(MtsentError):
    pass


class NonFiniteGradient(MtsentError):
    def __init__(self, name: str, detail: str = ""):
        self.name = name
        super().__init__(f"non-finite gradient in parameter {name!r}" + (f" ({detail})" if detail else ""))


class NonFiniteLoss(MtsentError):
    pass


class EmptyDevSet(MtsentError):
    pass


class LengthMismatch(MtsentError):
    pass


class EmptyInput(MtsentError):
    pass


class TooFewExamples(MtsentError):
    def __init__(self, k: int, message: str = ""):
        self.k = k
        super().__init__(message or f"too few examples for {k} folds")


class ScaleMismatch(MtsentError):
    pass


class ModelFormatError(MtsentError):
    pass


class ConfigError(MtsentError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)
