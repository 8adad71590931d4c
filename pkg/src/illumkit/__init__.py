"""Locale-centered illumination maps from RGB-D observations."""

from .panorama import Locale, PanoramaImage
from .geometry import Camera, GeometryMap

__all__ = ["Locale", "PanoramaImage", "Camera", "GeometryMap"]
__version__ = "0.1.0"
