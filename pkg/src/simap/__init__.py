"""Simplicial-map classification layers over iterated barycentric subdivisions."""
from .geometry import (
    EnclosingSimplex,
    OutsideSimplexError,
    ambient_from_barycentric,
    barycentric_from_ambient,
    build_simplex,
    contains,
)
from .layer import (
    Prediction,
    SimapModel,
    TrainConfig,
    detect_unclassifiable,
    explain,
    forward,
    load_model,
    save_model,
    train,
    vc_dimension,
)
from .subdivision import (
    SparseActivation,
    VertexInterner,
    activation,
    locate_ordering,
    subdivide_coords,
    subdivision_census,
)

__version__ = "0.1.0"
