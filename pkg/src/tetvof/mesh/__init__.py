from .lattice import (
    MeshError,
    TetMesh,
    generate_bcc_lattice,
    max_edge_lengths,
    mean_edge_length,
    subdivide,
    subdivide_positions,
    tet_volume,
    tet_volumes,
)
from .locate import BARY_EPS, PointLocator
from .quadrature import SUPPORTED_COUNTS, barycentric_table, quadrature_samples, tet_samples
from .solids import (
    Box,
    Cylinder,
    HalfSpace,
    RigidMotion,
    SampledSDF,
    SolidField,
    Sphere,
    sdf_query,
)

__all__ = [
    "BARY_EPS", "Box", "Cylinder", "HalfSpace", "MeshError", "PointLocator", "RigidMotion",
    "SUPPORTED_COUNTS", "SampledSDF", "SolidField", "Sphere", "TetMesh", "barycentric_table",
    "generate_bcc_lattice", "max_edge_lengths", "mean_edge_length", "quadrature_samples",
    "sdf_query", "subdivide", "subdivide_positions", "tet_samples", "tet_volume", "tet_volumes",
]
