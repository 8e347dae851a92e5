"""SDF training-data generation, forward surface reconstruction, and
evaluation utilities for single-view 3D reconstruction pipelines."""

from ._kernels import BACKEND, available_backends
from .bvh import Bvh, build_bvh
from .errors import SdfReconError, exit_code_for
from .grids import (
    Box3,
    FeatureMap2D,
    ScalarGrid,
    UNIT_BOX,
    VoxelGrid,
    bilinear_sample,
    disentangle_queries,
    expand_query_neighbors,
    multiscale_features,
    trilinear_sample,
    voxelize_points,
)
from .mesh import (
    PointCloud,
    TriMesh,
    farthest_point_sample,
    is_watertight,
    load_mesh,
    normalize_unit_cube,
    sample_surface,
    save_obj,
)
from .metrics import (
    MetricReport,
    chamfer_loss,
    chamfer_metric,
    combined_loss,
    evaluate_meshes,
    fscore,
    mesh_iou,
    occupancy_bce,
    sdf_mse,
    voxel_iou,
)
from .nn import (
    Conv3D,
    Dense,
    FuseConcat,
    PipelineConfig,
    PipelineInputs,
    WeightBundle,
    conv3d_forward,
    dense_forward,
    encode_grid,
    localize_queries,
    predict_sdf,
    refine_occupancy,
    run_pipeline,
)
from .occlusion import (
    CameraSpec,
    SurfaceSplit,
    cast_visibility,
    eval_occluded,
    separate_surfaces,
)
from .sdf import (
    QuerySamplingConfig,
    QuerySet,
    generate_query_set,
    signed_distance,
    signed_distances,
)
from .surface import IsoGridSpec, build_query_grid, marching_cubes

__version__ = "0.1.0"
