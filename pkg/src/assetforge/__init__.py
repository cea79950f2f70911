"""Turn a UV-mapped mesh and multi-view images into a simulation-ready URDF asset."""

__version__ = "0.1.0"
