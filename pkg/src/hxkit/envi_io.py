"""ENVI-format header parsing and binary cube reading/writing.

Supports all three interleaves (BSQ, BIL, BIP), both byte orders and the
six common data types. Cubes are held internally as band-interleaved-by-pixel
float64 arrays of shape (lines, samples, bands), so downstream per-pixel
spectral operations see contiguous spectra.
"""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    HeaderError,
    MalformedListError,
    MissingKeyError,
    OutOfRangeError,
    TruncatedError,
    UnsupportedTypeError,
)

# ENVI code <-> dtype name. Codes 6/9 (complex), 13-15 (u32/i64/u64) are
# rejected explicitly rather than coerced.
ENVI_CODE_TO_DTYPE = {1: "u8", 2: "i16", 3: "i32", 4: "f32", 5: "f64", 12: "u16"}
DTYPE_TO_ENVI_CODE = {v: k for k, v in ENVI_CODE_TO_DTYPE.items()}

_NUMPY_DTYPES = {
    "u8": np.uint8,
    "i16": np.int16,
    "u16": np.uint16,
    "i32": np.int32,
    "f32": np.float32,
    "f64": np.float64,
}

INTERLEAVES = ("bsq", "bil", "bip")
BYTE_ORDERS = ("little", "big")

_REQUIRED_KEYS = ("samples", "lines", "bands", "data type", "interleave", "byte order")


@dataclass
class HeaderInfo:
    """Parsed ENVI header.

    Optional per-band vectors (wavelengths, fwhm, bbl) must have exactly
    `bands` entries; wavelengths must be strictly increasing. Unknown keys are
    carried verbatim in `extra` so that files round-trip without a CRS engine.
    """

    samples: int
    lines: int
    bands: int
    data_type: str = "f64"
    interleave: str = "bsq"
    byte_order: str = "little"
    header_offset: int = 0
    wavelengths: list[float] | None = None
    fwhm: list[float] | None = None
    bbl: list[int] | None = None
    wavelength_units: str | None = None
    map_info: str | None = None
    description: str | None = None
    extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.samples <= 0 or self.lines <= 0 or self.bands <= 0:
            raise HeaderError("samples, lines and bands must all be positive")
        if self.data_type not in _NUMPY_DTYPES:
            raise UnsupportedTypeError(f"unsupported data type {self.data_type!r}")
        if self.interleave not in INTERLEAVES:
            raise HeaderError(f"unknown interleave {self.interleave!r}")
        if self.byte_order not in BYTE_ORDERS:
            raise HeaderError(f"unknown byte order {self.byte_order!r}")
        if self.header_offset < 0:
            raise HeaderError("header offset must be non-negative")
        for name in ("wavelengths", "fwhm", "bbl"):
            vec = getattr(self, name)
            if vec is not None and len(vec) != self.bands:
                raise HeaderError(
                    f"{name} has {len(vec)} entries, expected {self.bands}"
                )
        if self.wavelengths is not None:
            wl = np.asarray(self.wavelengths, dtype=float)
            if not np.all(np.diff(wl) > 0):
                raise HeaderError("wavelengths must be strictly increasing")
        if self.bbl is not None and any(v not in (0, 1) for v in self.bbl):
            raise HeaderError("bbl entries must be 0 or 1")

    def copy(self) -> "HeaderInfo":
        return copy.deepcopy(self)

    @property
    def itemsize(self) -> int:
        return np.dtype(_NUMPY_DTYPES[self.data_type]).itemsize


class HyperCube:
    """Dense hyperspectral raster: float64 values of shape (lines, samples, bands).

    Immutable by convention: every operation returns a new cube. `nodata` is a
    sentinel value excluded from statistics by downstream code.
    """

    def __init__(self, header: HeaderInfo, values: np.ndarray, nodata: float | None = None):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError("cube values must be 3-D (lines, samples, bands)")
        if values.shape != (header.lines, header.samples, header.bands):
            raise ValueError(
                f"values shape {values.shape} does not match header "
                f"({header.lines}, {header.samples}, {header.bands})"
            )
        self.header = header
        self.values = values
        self.nodata = nodata

    @property
    def lines(self) -> int:
        return self.header.lines

    @property
    def samples(self) -> int:
        return self.header.samples

    @property
    def bands(self) -> int:
        return self.header.bands

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def pixel(self, row: int, col: int) -> np.ndarray:
        return self.values[row, col, :]

    def valid_mask(self) -> np.ndarray:
        """Boolean (lines, samples) mask of pixels with no nodata entries."""
        if self.nodata is None:
            return np.ones((self.lines, self.samples), dtype=bool)
        return ~np.any(self.values == self.nodata, axis=2)

    def flat(self) -> np.ndarray:
        """(lines*samples, bands) view of the spectra, row-major."""
        return self.values.reshape(-1, self.bands)

    def with_values(self, values: np.ndarray, header: HeaderInfo | None = None) -> "HyperCube":
        return HyperCube(header if header is not None else self.header.copy(), values, self.nodata)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HyperCube):
            return NotImplemented
        return (
            self.header == other.header
            and self.nodata == other.nodata
            and np.array_equal(self.values, other.values)
        )


def cube_from_image(image: np.ndarray, nodata: float | None = None) -> HyperCube:
    """Wrap a 2-D image (or band stack) into a cube with a minimal header."""
    arr = np.asarray(image, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    header = HeaderInfo(samples=arr.shape[1], lines=arr.shape[0], bands=arr.shape[2])
    return HyperCube(header, arr, nodata=nodata)


# ---------------------------------------------------------------------------
# Header text parsing / emission
# ---------------------------------------------------------------------------

def _normalize_key(raw: str) -> str:
    return " ".join(raw.strip().lower().split())


def _scan_entries(text: str) -> list[tuple[str, str]]:
    """Split header text into (key, raw value) pairs; brace lists may span lines."""
    lines = text.splitlines()
    if not lines or lines[0].strip().upper() != "ENVI":
        raise HeaderError("header must begin with the ENVI token")
    entries: list[tuple[str, str]] = []
    i = 1
    n = len(lines)
    while i < n:
        line = lines[i]
        i += 1
        stripped = line.strip()
        if not stripped or stripped.startswith(";"):
            continue
        if "=" not in stripped:
            continue
        key_part, value_part = stripped.split("=", 1)
        key = _normalize_key(key_part)
        value = value_part.strip()
        if value.startswith("{") and "}" not in value:
            parts = [value]
            while i < n:
                cont = lines[i]
                i += 1
                parts.append(cont.strip())
                if "}" in cont:
                    break
            value = " ".join(parts)
            if "}" not in value:
                raise MalformedListError(f"unterminated brace list for key {key!r}")
        entries.append((key, value))
    return entries


def _strip_braces(value: str) -> str:
    v = value.strip()
    if v.startswith("{") and v.endswith("}"):
        return v[1:-1].strip()
    return v


def _parse_float_list(key: str, value: str, bands: int) -> list[float]:
    inner = _strip_braces(value)
    tokens = [t for t in (tok.strip() for tok in inner.split(",")) if t]
    try:
        vals = [float(t) for t in tokens]
    except ValueError as exc:
        raise MalformedListError(f"non-numeric entry in {key!r} list") from exc
    if len(vals) != bands:
        raise HeaderError(f"{key!r} list has {len(vals)} entries, expected {bands}")
    return vals


def _parse_int(key: str, value: str) -> int:
    try:
        return int(_strip_braces(value))
    except ValueError as exc:
        raise HeaderError(f"header value for {key!r} is not an integer: {value!r}") from exc


def parse_header(text: str) -> HeaderInfo:
    """Parse ENVI header text into a `HeaderInfo`.

    Keys match case-insensitively with collapsed whitespace; values start
    after the first `=`; `{...}` lists may span lines. Duplicate keys keep the
    last occurrence (with a warning). Unknown keys are preserved verbatim.
    """
    raw: dict[str, str] = {}
    for key, value in _scan_entries(text):
        if key in raw:
            warnings.warn(f"duplicate header key {key!r}: last occurrence wins")
        raw[key] = value

    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise MissingKeyError(key)

    samples = _parse_int("samples", raw.pop("samples"))
    lines = _parse_int("lines", raw.pop("lines"))
    bands = _parse_int("bands", raw.pop("bands"))

    code = _parse_int("data type", raw.pop("data type"))
    if code not in ENVI_CODE_TO_DTYPE:
        raise UnsupportedTypeError(f"unsupported ENVI data type code {code}")
    data_type = ENVI_CODE_TO_DTYPE[code]

    interleave = _strip_braces(raw.pop("interleave")).lower()
    if interleave not in INTERLEAVES:
        raise HeaderError(f"unknown interleave {interleave!r}")

    bo = _parse_int("byte order", raw.pop("byte order"))
    if bo not in (0, 1):
        raise HeaderError(f"byte order must be 0 or 1, got {bo}")
    byte_order = "little" if bo == 0 else "big"

    header_offset = 0
    if "header offset" in raw:
        header_offset = _parse_int("header offset", raw.pop("header offset"))

    wavelengths = fwhm = None
    bbl = None
    if "wavelength" in raw:
        wavelengths = _parse_float_list("wavelength", raw.pop("wavelength"), bands)
    if "fwhm" in raw:
        fwhm = _parse_float_list("fwhm", raw.pop("fwhm"), bands)
    if "bbl" in raw:
        bbl_f = _parse_float_list("bbl", raw.pop("bbl"), bands)
        bbl = [int(v) for v in bbl_f]
        if any(f not in (0.0, 1.0) for f in bbl_f):
            raise HeaderError("bbl entries must be 0 or 1")

    wavelength_units = None
    if "wavelength units" in raw:
        wavelength_units = _strip_braces(raw.pop("wavelength units"))
    map_info = raw.pop("map info", None)  # kept verbatim, braces included
    description = None
    if "description" in raw:
        description = _strip_braces(raw.pop("description"))

    return HeaderInfo(
        samples=samples,
        lines=lines,
        bands=bands,
        data_type=data_type,
        interleave=interleave,
        byte_order=byte_order,
        header_offset=header_offset,
        wavelengths=wavelengths,
        fwhm=fwhm,
        bbl=bbl,
        wavelength_units=wavelength_units,
        map_info=map_info,
        description=description,
        extra=raw,
    )


def _format_float(x: float) -> str:
    # repr round-trips exactly through float()
    return repr(float(x))


def emit_header(header: HeaderInfo) -> str:
    """Render `HeaderInfo` back to ENVI header text; parse(emit(h)) == h."""
    out = ["ENVI"]
    if header.description is not None:
        out.append(f"description = {{{header.description}}}")
    out.append(f"samples = {header.samples}")
    out.append(f"lines = {header.lines}")
    out.append(f"bands = {header.bands}")
    out.append(f"header offset = {header.header_offset}")
    out.append(f"data type = {DTYPE_TO_ENVI_CODE[header.data_type]}")
    out.append(f"interleave = {header.interleave}")
    out.append(f"byte order = {0 if header.byte_order == 'little' else 1}")
    if header.map_info is not None:
        out.append(f"map info = {header.map_info}")
    if header.wavelength_units is not None:
        out.append(f"wavelength units = {header.wavelength_units}")
    if header.wavelengths is not None:
        out.append("wavelength = {" + ", ".join(_format_float(v) for v in header.wavelengths) + "}")
    if header.fwhm is not None:
        out.append("fwhm = {" + ", ".join(_format_float(v) for v in header.fwhm) + "}")
    if header.bbl is not None:
        out.append("bbl = {" + ", ".join(str(int(v)) for v in header.bbl) + "}")
    for key, value in header.extra.items():
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Binary payload handling
# ---------------------------------------------------------------------------

def _numpy_dtype(header: HeaderInfo) -> np.dtype:
    base = np.dtype(_NUMPY_DTYPES[header.data_type])
    if base.itemsize == 1:
        return base
    return base.newbyteorder("<" if header.byte_order == "little" else ">")


def _read_raw(header: HeaderInfo, payload: bytes) -> np.ndarray:
    """Decode payload into an array of shape (lines, samples, bands), native dtype."""
    count = header.samples * header.lines * header.bands
    expected = header.header_offset + count * header.itemsize
    if len(payload) < expected:
        raise TruncatedError(
            f"payload has {len(payload)} bytes, expected at least {expected}"
        )
    flat = np.frombuffer(payload, dtype=_numpy_dtype(header), count=count,
                         offset=header.header_offset)
    if header.interleave == "bsq":
        arr = flat.reshape(header.bands, header.lines, header.samples)
        return arr.transpose(1, 2, 0)
    if header.interleave == "bil":
        arr = flat.reshape(header.lines, header.bands, header.samples)
        return arr.transpose(0, 2, 1)
    return flat.reshape(header.lines, header.samples, header.bands)


def read_cube(header: HeaderInfo, payload: bytes, nodata: float | None = None) -> HyperCube:
    """Decode a binary payload into a canonical float64 cube.

    Interleave and byte order are taken from the header; the result is
    independent of the source interleave. Non-finite values in floating
    payloads are kept and reported via a warning.
    """
    arr = _read_raw(header, payload)
    values = np.ascontiguousarray(arr, dtype=np.float64)
    if header.data_type in ("f32", "f64"):
        bad = np.count_nonzero(~np.isfinite(values))
        if bad:
            warnings.warn(f"payload contains {bad} non-finite values")
    out_header = header.copy()
    return HyperCube(out_header, values, nodata=nodata)


_INT_BOUNDS = {
    "u8": (0, 255),
    "i16": (-32768, 32767),
    "u16": (0, 65535),
    "i32": (-2147483648, 2147483647),
}


def write_cube(cube: HyperCube, interleave: str = "bsq", data_type: str = "f64",
               byte_order: str = "little", quantize: bool = False) -> tuple[str, bytes]:
    """Serialize a cube to (header text, raw bytes) in the requested layout.

    Integer targets require integral, in-range values unless `quantize` is
    set, in which case values are rounded and clipped to the type range.
    """
    if interleave not in INTERLEAVES:
        raise HeaderError(f"unknown interleave {interleave!r}")
    if data_type not in _NUMPY_DTYPES:
        raise UnsupportedTypeError(f"unsupported data type {data_type!r}")
    if byte_order not in BYTE_ORDERS:
        raise HeaderError(f"unknown byte order {byte_order!r}")

    values = cube.values
    if data_type in _INT_BOUNDS:
        lo, hi = _INT_BOUNDS[data_type]
        if quantize:
            values = np.clip(np.rint(values), lo, hi)
        else:
            if not np.all(np.isfinite(values)):
                raise OutOfRangeError("non-finite values cannot be stored in an integer type")
            if np.any(values < lo) or np.any(values > hi):
                raise OutOfRangeError(
                    f"values outside [{lo}, {hi}] for {data_type}; pass quantize=True to clip"
                )
            if np.any(values != np.rint(values)):
                raise OutOfRangeError(
                    f"non-integral values for {data_type}; pass quantize=True to round"
                )

    out_header = cube.header.copy()
    out_header.data_type = data_type
    out_header.interleave = interleave
    out_header.byte_order = byte_order
    out_header.header_offset = 0

    dtype = _numpy_dtype(out_header)
    if interleave == "bsq":
        arr = values.transpose(2, 0, 1)
    elif interleave == "bil":
        arr = values.transpose(0, 2, 1)
    else:
        arr = values
    payload = np.ascontiguousarray(arr).astype(dtype).tobytes()
    return emit_header(out_header), payload


def convert_interleave(header: HeaderInfo, payload: bytes, target: str) -> bytes:
    """Re-order payload bytes to `target` interleave; a pure permutation.

    Any header-offset prefix is preserved verbatim. Content (per-pixel,
    per-band samples) is unchanged.
    """
    if target not in INTERLEAVES:
        raise HeaderError(f"unknown interleave {target!r}")
    count = header.samples * header.lines * header.bands
    expected = header.header_offset + count * header.itemsize
    if len(payload) < expected:
        raise TruncatedError(
            f"payload has {len(payload)} bytes, expected at least {expected}"
        )
    prefix = payload[: header.header_offset]
    flat = np.frombuffer(payload, dtype=_numpy_dtype(header), count=count,
                         offset=header.header_offset)
    if header.interleave == "bsq":
        canon = flat.reshape(header.bands, header.lines, header.samples).transpose(1, 2, 0)
    elif header.interleave == "bil":
        canon = flat.reshape(header.lines, header.bands, header.samples).transpose(0, 2, 1)
    else:
        canon = flat.reshape(header.lines, header.samples, header.bands)
    if target == "bsq":
        out = canon.transpose(2, 0, 1)
    elif target == "bil":
        out = canon.transpose(0, 2, 1)
    else:
        out = canon
    return prefix + np.ascontiguousarray(out).tobytes()


# ---------------------------------------------------------------------------
# File-level helpers
# ---------------------------------------------------------------------------

_DATA_SUFFIXES = ("", ".img", ".dat", ".raw", ".bsq", ".bil", ".bip")


def find_data_path(hdr_path: str | Path) -> Path:
    """Infer the binary data path for a header file by extension stripping."""
    hdr = Path(hdr_path)
    stem = hdr.with_suffix("") if hdr.suffix.lower() == ".hdr" else hdr
    for suffix in _DATA_SUFFIXES:
        candidate = stem.parent / (stem.name + suffix)
        if candidate.exists() and candidate != hdr:
            return candidate
    raise FileNotFoundError(f"no data file found next to {hdr}")


def load_cube(hdr_path: str | Path, data_path: str | Path | None = None,
              nodata: float | None = None) -> HyperCube:
    """Read a cube from an ENVI header file plus its binary companion."""
    hdr_path = Path(hdr_path)
    header = parse_header(hdr_path.read_text())
    data = Path(data_path) if data_path is not None else find_data_path(hdr_path)
    return read_cube(header, data.read_bytes(), nodata=nodata)


def save_cube(cube: HyperCube, hdr_path: str | Path, data_path: str | Path | None = None,
              interleave: str = "bsq", data_type: str = "f64",
              byte_order: str = "little", quantize: bool = False) -> tuple[Path, Path]:
    """Write a cube as an `.hdr` + binary pair; returns the two paths."""
    hdr_path = Path(hdr_path)
    if data_path is None:
        stem = hdr_path.with_suffix("") if hdr_path.suffix.lower() == ".hdr" else hdr_path
        data_path = stem.parent / (stem.name + ".img")
    data_path = Path(data_path)
    header_text, payload = write_cube(cube, interleave=interleave, data_type=data_type,
                                      byte_order=byte_order, quantize=quantize)
    hdr_path.parent.mkdir(parents=True, exist_ok=True)
    hdr_path.write_text(header_text)
    data_path.write_bytes(payload)
    return hdr_path, data_path
