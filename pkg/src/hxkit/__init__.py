"""hxkit: hyperspectral image analysis toolkit.

ENVI cube I/O, sensor simulation, preprocessing, data-quality analysis,
spectral unmixing, classical classification, Hx-Mx fusion and regression,
exposed as a library and a `hxkit` command line.
"""

__version__ = "0.1.0"

from .cube import (LabelMask, SpectralLibrary, band_stats, scale_cube,
                   scatter_stats, spatial_subset, spectral_angle,
                   spectral_subset)
from .envi_io import (HeaderInfo, HyperCube, convert_interleave, emit_header,
                      load_cube, parse_header, read_cube, save_cube,
                      write_cube)

__all__ = [
    "HeaderInfo",
    "HyperCube",
    "LabelMask",
    "SpectralLibrary",
    "band_stats",
    "convert_interleave",
    "emit_header",
    "load_cube",
    "parse_header",
    "read_cube",
    "save_cube",
    "scale_cube",
    "scatter_stats",
    "spatial_subset",
    "spectral_angle",
    "spectral_subset",
    "write_cube",
]
