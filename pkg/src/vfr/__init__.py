"""Volume feature rendering for hash-grid radiance fields.

Grid features are blended along each ray with the usual volume-rendering
weights and the colour network runs once per ray instead of once per sample.
"""

from .errors import (ConfigError, DataError, DivergenceError, DomainError, NumericError, ShapeError,
                     UsageError, VfrError)
from .hashgrid import FeatureGrid, GridConfig
from .nn import MlpSpec, NetworkBundle, NetworkConfig
from .render import RenderMode, SceneModel, render_image, render_rays, render_standard, render_vfr

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "DivergenceError", "DomainError", "NumericError", "ShapeError",
    "UsageError", "VfrError", "FeatureGrid", "GridConfig", "MlpSpec", "NetworkBundle",
    "NetworkConfig", "RenderMode", "SceneModel", "render_image", "render_rays", "render_standard",
    "render_vfr",
]
