"""Two-stage adaptive nonlocal InSAR phase filter with fringe compensation."""

from .baselines import boxcar
from .filter import FilterParams, nlswag, stage1_filter, stage2_filter
from .raster import EstimateBundle, Raster, SlcPair, read_raster, write_raster
from .simulate import SceneSpec, make_fractal, make_ramp, make_step, sample_slc_pair

__all__ = [
    "EstimateBundle", "FilterParams", "Raster", "SceneSpec", "SlcPair", "boxcar", "make_fractal",
    "make_ramp", "make_step", "nlswag", "read_raster", "sample_slc_pair", "stage1_filter",
    "stage2_filter", "write_raster",
]

__version__ = "0.1.0"
