"""Spherical-mesh panorama depth toolkit.

Icosahedral meshes with cached adjacency, equirectangular <-> sphere
resampling, a small reverse-mode autodiff engine, mesh convolution layers,
gated two-branch fusion, the reverse-Huber multi-scale loss, and the depth
metrics that score it all.
"""

from .errors import (
    ConfigError,
    DomainError,
    EvaluationError,
    GeometryError,
    LevelError,
    PanomeshError,
    ShapeError,
    TopologyError,
)
from .icosphere import (
    AdjacencyCache,
    MeshHierarchy,
    SphericalMesh,
    build_icosahedron,
    compute_faf,
    face_count,
    faf_computation_count,
    get_mesh,
    locate_face,
    locate_faces,
    reset_faf_computation_count,
    subdivide,
    vertex_count,
)
from .projection import (
    EquirectGrid,
    PointCloud,
    ProjectionTable,
    build_projection_table,
    center_to_lonlat,
    depth_to_pointcloud_grid,
    depth_to_pointcloud_mesh,
    e2s_resample,
    lonlat_to_direction,
    lonlat_to_pixel,
    pixel_to_lonlat,
    s2e_resample,
)
from .autodiff import (
    Adam,
    Parameters,
    Tape,
    Tensor,
    finite_difference_check,
    finite_difference_direction,
)
from .mesh_ops import MeshFeature, mesh_conv, mesh_max_pool, mesh_res_block, mesh_unpool
from .metrics import BERHU_THRESHOLD, MetricsReport, berhu, evaluate, multiscale_loss, valid_mask
from .fusion import (
    FUSION_MODES,
    NetworkConfig,
    PanoDepthNet,
    TrainState,
    bifuse_variant,
    config_from_dict,
    config_to_dict,
    default_toy_config,
    gate_fuse,
    make_train_state,
    train_step,
    unifuse_variant,
)
from .synth import band_limited_card, make_scene

__version__ = "0.1.0"
