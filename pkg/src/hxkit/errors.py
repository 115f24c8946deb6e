"""Exception types shared across the toolkit."""


class HxkitError(Exception):
    """Base class for all hxkit errors."""


class HeaderError(HxkitError):
    """Malformed or inconsistent ENVI header."""


class MissingKeyError(HeaderError):
    def __init__(self, key: str):
        super().__init__(f"required header key missing: {key!r}")
        self.key = key


class MalformedListError(HeaderError):
    """Brace-delimited list is unterminated or not parseable."""


class UnsupportedTypeError(HeaderError):
    """ENVI data-type code outside the supported set."""


class TruncatedError(HxkitError):
    """Binary payload shorter than the header promises."""


class OutOfRangeError(HxkitError):
    """Value cannot be represented in the requested integer type."""


class ZeroScaleError(HxkitError):
    """Scale factor must be finite and nonzero."""


class ZeroNormError(HxkitError):
    """Spectral angle is undefined for a zero-norm spectrum."""


class DegenerateVarianceError(HxkitError):
    """Statistic undefined because a variable has zero variance."""


class EmptySupportError(HxkitError):
    """Spectral response has no support on the source wavelength grid."""


class NoBandNearError(HxkitError):
    def __init__(self, wavelength_nm: float, tolerance_nm: float):
        super().__init__(
            f"no band within {tolerance_nm:g} nm of {wavelength_nm:g} nm"
        )
        self.wavelength_nm = wavelength_nm
        self.tolerance_nm = tolerance_nm


class NonPositiveInputError(HxkitError):
    """Operation requires strictly positive input values."""
