"""Exception hierarchy shared by all modules."""


class EntroprobeError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(EntroprobeError, ValueError):
    pass


class ShapeError(EntroprobeError, ValueError):
    pass


class RangeError(EntroprobeError, IndexError):
    pass


class FormatError(EntroprobeError, ValueError):
    pass


class MissingTensorError(FormatError, KeyError):
    def __init__(self, name: str):
        super().__init__(f"missing tensor: {name!r}")
        self.name = name

    def __str__(self) -> str:  # KeyError would quote the whole message
        return self.args[0]


class ContextOverflowError(EntroprobeError, ValueError):
    pass


class NumericFaultError(EntroprobeError, ArithmeticError):
    pass


class EmptyCorpusError(EntroprobeError, ValueError):
    pass
