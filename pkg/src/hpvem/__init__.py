"""hp-adaptive virtual element Poisson solver on polygonal meshes with
global and vertex-patch equilibrated-flux error estimators."""

__version__ = "0.1.0"
