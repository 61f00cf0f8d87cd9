"""Exception hierarchy.

Every error raised on purpose by the package derives from `SpectralFRGError`,
so the CLI can map them to a nonzero exit status with a readable message.
"""


class SpectralFRGError(Exception):
    """Base class for all package errors."""


class ShapeError(SpectralFRGError, ValueError):
    pass


class NumericInputError(SpectralFRGError, ValueError):
    pass


class DegenerateSignatureError(SpectralFRGError, ValueError):
    """A spectrum with zero Frobenius norm has no unit state."""


class DegenerateEmbeddingError(SpectralFRGError, ValueError):
    pass


class ParameterError(SpectralFRGError, ValueError):
    pass


class ConfigurationError(SpectralFRGError, ValueError):
    pass


class EmptyInputError(SpectralFRGError, ValueError):
    pass


class OperatorLookupError(SpectralFRGError, KeyError):
    def __str__(self) -> str:
        # KeyError quotes its argument; keep messages readable.
        return str(self.args[0]) if self.args else ""


class ContainerParseError(SpectralFRGError, ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class IntegrityError(SpectralFRGError, ValueError):
    pass


class UnsupportedDtypeError(SpectralFRGError, TypeError):
    def __init__(self, dtype: str):
        super().__init__(f"unsupported tensor dtype {dtype!r} (supported: F32, F64)")
        self.dtype = dtype
