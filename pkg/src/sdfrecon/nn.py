"""Forward-only network evaluation from serialized weight bundles.

No training or autodiff lives here; bundles are data produced elsewhere.
Layer kinds: dense, 3D convolution, and a concat port that splices an
externally bound tensor into the stack.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import lstg
from ._kernels import impl
from .errors import (
    BadBundle,
    KernelTooLarge,
    PipelineStageError,
    ShapeMismatch,
    UnboundPort,
)
from .grids import (
    UNIT_BOX,
    Box3,
    FeatureMap2D,
    ScalarGrid,
    VoxelGrid,
    bilinear_sample,
    disentangle_queries,
    multiscale_features,
    voxelize_points,
)

LEAKY_SLOPE = 0.2


def apply_activation(name, x):
    if name == "none":
        return x
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "leaky_relu":
        return np.where(x >= 0.0, x, LEAKY_SLOPE * x)
    if name == "sigmoid":
        return expit(x)
    if name == "tanh":
        return np.tanh(x)
    raise BadBundle(f"unknown activation {name!r}")


ACTIVATIONS = ("none", "relu", "leaky_relu", "sigmoid", "tanh")


@dataclass
class Dense:
    """Affine layer: activation(x @ weight + bias), weight (in_dim, out_dim)."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "none"

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weight.ndim != 2 or self.bias.shape[0] != self.weight.shape[1]:
            raise BadBundle(
                f"dense weight {self.weight.shape} / bias {self.bias.shape} disagree"
            )
        if self.activation not in ACTIVATIONS:
            raise BadBundle(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self):
        return self.weight.shape[0]

    @property
    def out_dim(self):
        return self.weight.shape[1]


@dataclass
class Conv3D:
    """Cubic-kernel cross-correlation; weight (out_ch, in_ch, k, k, k)."""

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    pad: int = 0
    activation: str = "none"

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weight.ndim != 5:
            raise BadBundle(f"conv weight needs 5 dims, got {self.weight.shape}")
        o, c, kd, kh, kw = self.weight.shape
        if not (kd == kh == kw):
            raise BadBundle(f"conv kernel must be cubic, got {(kd, kh, kw)}")
        if self.bias.shape[0] != o:
            raise BadBundle(f"conv bias {self.bias.shape} != out channels {o}")
        if self.stride < 1 or self.pad < 0:
            raise BadBundle(f"bad stride/pad ({self.stride}, {self.pad})")
        if self.activation not in ACTIVATIONS:
            raise BadBundle(f"unknown activation {self.activation!r}")

    @property
    def in_ch(self):
        return self.weight.shape[1]

    @property
    def out_ch(self):
        return self.weight.shape[0]

    @property
    def kernel(self):
        return self.weight.shape[2]


@dataclass
class FuseConcat:
    """Splices the tensor bound to `port` onto the feature axis here."""

    port: str


@dataclass
class WeightBundle:
    """Ordered layer stack plus tap points and the uv output mapping."""

    layers: list
    taps: tuple = ()
    uv_map: str = "sigmoid"

    def __post_init__(self):
        self.taps = tuple(int(t) for t in self.taps)
        for t in self.taps:
            if not 0 <= t < len(self.layers):
                raise BadBundle(f"tap index {t} outside layer range")
        if self.uv_map not in ("sigmoid", "none"):
            raise BadBundle(f"uv_map must be sigmoid or none, got {self.uv_map!r}")
        self._check_chain()

    def _check_chain(self):
        """Adjacent shape compatibility where it is statically known."""
        width = None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, FuseConcat):
                width = None  # port width unknown until bound
            elif isinstance(layer, Dense):
                if width is not None and layer.in_dim != width:
                    raise BadBundle(
                        f"layer {i} expects {layer.in_dim} inputs, gets {width}"
                    )
                width = layer.out_dim
            elif isinstance(layer, Conv3D):
                if width is not None and layer.in_ch != width:
                    raise BadBundle(
                        f"layer {i} expects {layer.in_ch} channels, gets {width}"
                    )
                width = layer.out_ch
            else:
                raise BadBundle(f"unknown layer type {type(layer).__name__}")

    @property
    def ports(self):
        return tuple(l.port for l in self.layers if isinstance(l, FuseConcat))

    def save(self, path):
        arch = []
        arrays = {}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dense):
                arch.append({"type": "dense", "activation": layer.activation})
                arrays[f"layer{i}.weight"] = layer.weight
                arrays[f"layer{i}.bias"] = layer.bias
            elif isinstance(layer, Conv3D):
                arch.append({
                    "type": "conv3d",
                    "stride": layer.stride,
                    "pad": layer.pad,
                    "activation": layer.activation,
                })
                arrays[f"layer{i}.weight"] = layer.weight
                arrays[f"layer{i}.bias"] = layer.bias
            else:
                arch.append({"type": "fuse_concat", "port": layer.port})
        manifest = {"layers": arch, "taps": list(self.taps), "uv_map": self.uv_map}
        blob = np.frombuffer(json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8)
        arrays["arch"] = blob
        lstg.write(path, arrays)

    @classmethod
    def load(cls, path):
        data = lstg.read(path)
        if "arch" not in data:
            raise BadBundle(f"{path}: no arch manifest entry")
        try:
            manifest = json.loads(bytes(np.asarray(data["arch"], dtype=np.uint8)))
        except (ValueError, UnicodeDecodeError) as exc:
            raise BadBundle(f"{path}: bad arch manifest: {exc}") from exc
        layers = []
        for i, spec in enumerate(manifest.get("layers", [])):
            kind = spec.get("type")
            if kind == "fuse_concat":
                layers.append(FuseConcat(spec["port"]))
                continue
            try:
                w = np.asarray(data[f"layer{i}.weight"], dtype=np.float64)
                b = np.asarray(data[f"layer{i}.bias"], dtype=np.float64)
            except KeyError as exc:
                raise BadBundle(f"{path}: missing parameter entry {exc}") from exc
            act = spec.get("activation", "none")
            if kind == "dense":
                layers.append(Dense(w, b, act))
            elif kind == "conv3d":
                layers.append(Conv3D(w, b, int(spec.get("stride", 1)),
                                     int(spec.get("pad", 0)), act))
            else:
                raise BadBundle(f"{path}: unknown layer type {kind!r}")
        return cls(layers, tuple(manifest.get("taps", ())),
                   manifest.get("uv_map", "sigmoid"))


def dense_forward(layer: Dense, x):
    """activation(x @ W + b), batched over every leading dimension."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise ShapeMismatch(
            f"dense input width {x.shape[-1]} != expected {layer.in_dim}"
        )
    return apply_activation(layer.activation, x @ layer.weight + layer.bias)


def conv3d_forward(layer: Conv3D, x):
    """Direct cross-correlation on a (C, D, H, W) tensor, zero padded."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeMismatch(f"conv input needs shape (C, D, H, W), got {x.shape}")
    if x.shape[0] != layer.in_ch:
        raise ShapeMismatch(
            f"conv input channels {x.shape[0]} != expected {layer.in_ch}"
        )
    k, s, p = layer.kernel, layer.stride, layer.pad
    for d in x.shape[1:]:
        if (d + 2 * p - k) // s + 1 < 1:
            raise KernelTooLarge(
                f"kernel {k} (pad {p}) exceeds input extent {x.shape[1:]}"
            )
    out = impl.conv3d(x, layer.weight, layer.bias, s, p)
    return apply_activation(layer.activation, out)


def _run_conv_stack(bundle: WeightBundle, x, collect_taps=False):
    outs = []
    for i, layer in enumerate(bundle.layers):
        if not isinstance(layer, Conv3D):
            raise BadBundle(f"layer {i}: conv stack cannot hold {type(layer).__name__}")
        x = conv3d_forward(layer, x)
        if collect_taps and i in bundle.taps:
            outs.append(x)
    return (x, outs) if collect_taps else x


def refine_occupancy(bundle: WeightBundle, occupancy: VoxelGrid) -> ScalarGrid:
    """Binary occupancies to per-cell probabilities, resolution preserved."""
    convs = [l for l in bundle.layers if isinstance(l, Conv3D)]
    if not convs or convs[-1].activation != "sigmoid":
        raise BadBundle("occupancy refiner must end in a sigmoid conv layer")
    x = occupancy.data.astype(np.float64)[None]
    out = _run_conv_stack(bundle, x)
    if out.shape[1:] != occupancy.data.shape or out.shape[0] != 1:
        raise ShapeMismatch(
            f"refiner changed resolution: {out.shape} from {occupancy.data.shape}"
        )
    return ScalarGrid(np.moveaxis(out, 0, -1), occupancy.extent)


def encode_grid(bundle: WeightBundle, grid: ScalarGrid) -> list:
    """Feature pyramid: the activation volume after each declared tap layer."""
    if not bundle.taps:
        raise BadBundle("encoder bundle declares no tap layers")
    x = np.moveaxis(grid.data, -1, 0)
    _, tapped = _run_conv_stack(bundle, x, collect_taps=True)
    return [ScalarGrid(np.moveaxis(t, 0, -1), grid.extent) for t in tapped]


def _run_dense_stack(bundle: WeightBundle, x, ports):
    bound = set()
    for i, layer in enumerate(bundle.layers):
        if isinstance(layer, FuseConcat):
            if layer.port not in ports:
                raise UnboundPort(f"fuse port {layer.port!r} has no bound tensor")
            if layer.port in bound:
                raise UnboundPort(f"fuse port {layer.port!r} bound twice")
            bound.add(layer.port)
            t = np.asarray(ports[layer.port], dtype=np.float64)
            if t.ndim == 1:
                t = np.broadcast_to(t, (x.shape[0], t.shape[0]))
            elif t.shape[0] != x.shape[0]:
                raise ShapeMismatch(
                    f"port {layer.port!r} rows {t.shape[0]} != batch {x.shape[0]}"
                )
            x = np.concatenate([x, t], axis=1)
        elif isinstance(layer, Dense):
            x = dense_forward(layer, x)
        else:
            raise BadBundle(f"layer {i}: dense stack cannot hold {type(layer).__name__}")
    return x


def localize_queries(bundle: WeightBundle, z_img, z_pts, queries):
    """Map 3D queries to 2D image-plane coordinates in [0,1]^2.

    The bundle must contain exactly one fuse port; it receives the
    concatenated global image and point features. The final layer is linear;
    the bundle's uv_map (sigmoid by default, else clamp) lands the result in
    the unit square.
    """
    if len(bundle.ports) != 1:
        raise UnboundPort(
            f"localizer needs exactly one fuse port, found {len(bundle.ports)}"
        )
    z_img = np.asarray(z_img, dtype=np.float64).reshape(-1)
    z_pts = np.asarray(z_pts, dtype=np.float64).reshape(-1)
    fused = np.concatenate([z_img, z_pts])
    pts = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    out = _run_dense_stack(bundle, pts, {bundle.ports[0]: fused})
    if out.shape[1] != 2:
        raise ShapeMismatch(f"localizer output width {out.shape[1]} != 2")
    if bundle.uv_map == "sigmoid":
        return expit(out)
    return np.clip(out, 0.0, 1.0)


def predict_sdf(bundle: WeightBundle, feat_volume, feat_image):
    """One signed distance per query from concatenated volume+image features.

    Outputs follow the stored-value convention: scaled, negative inside.
    """
    fc = np.asarray(feat_volume, dtype=np.float64)
    fl = np.asarray(feat_image, dtype=np.float64)
    fc = fc.reshape(len(fc), -1)
    fl = fl.reshape(len(fl), -1)
    if fc.shape[0] != fl.shape[0]:
        raise ShapeMismatch(f"feature row counts differ: {fc.shape[0]} vs {fl.shape[0]}")
    x = np.concatenate([fc, fl], axis=1)
    out = _run_dense_stack(bundle, x, {})
    if out.shape[1] != 1:
        raise ShapeMismatch(f"sdf head output width {out.shape[1]} != 1")
    return out[:, 0]


@dataclass
class PipelineInputs:
    """Everything the forward reconstruction consumes.

    coarse_cloud: (n,3) scaffold points. local_map: image feature plane.
    z_img / z_pts: global feature vectors. Four bundles: occupancy refiner,
    grid encoder, query localizer, sdf head.
    """

    coarse_cloud: np.ndarray
    local_map: FeatureMap2D
    z_img: np.ndarray
    z_pts: np.ndarray
    occ_refiner: WeightBundle
    grid_encoder: WeightBundle
    localizer: WeightBundle
    sdf_head: WeightBundle


@dataclass
class PipelineConfig:
    vox_res: int = 128
    extent: Box3 = UNIT_BOX
    grid_res: tuple = (128, 128, 128)
    neighbor_d: float = 1.0 / 128.0
    batch_size: int = 65536


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError(name, exc) from exc


def run_pipeline(inputs: PipelineInputs, cfg: PipelineConfig = None,
                 queries=None) -> ScalarGrid:
    """Full forward pass: coarse cloud + image features to a dense SDF grid.

    With `queries` given, returns the raw per-query values instead of the
    grid (used by tests for batch-partition checks).
    """
    from .surface import IsoGridSpec, build_query_grid

    cfg = cfg or PipelineConfig()
    vox = _stage("voxelize", voxelize_points, inputs.coarse_cloud,
                 cfg.vox_res, cfg.extent)
    prob = _stage("refine_occupancy", refine_occupancy, inputs.occ_refiner, vox)
    pyramid = _stage("encode_grid", encode_grid, inputs.grid_encoder, prob)

    grid_mode = queries is None
    if grid_mode:
        spec = IsoGridSpec(cfg.grid_res, cfg.extent)
        queries = build_query_grid(spec)
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)

    n = len(queries)
    values = np.empty(n)
    step = max(int(cfg.batch_size), 1)
    for s in range(0, n, step):
        q = queries[s:s + step]
        warped = _stage("disentangle", disentangle_queries, q)
        f_c = _stage("multiscale_features", multiscale_features,
                     pyramid, warped, cfg.neighbor_d)
        uv = _stage("localize_queries", localize_queries,
                    inputs.localizer, inputs.z_img, inputs.z_pts, q)
        f_l = _stage("bilinear_sample", bilinear_sample, inputs.local_map, uv)
        values[s:s + step] = _stage("predict_sdf", predict_sdf,
                                    inputs.sdf_head, f_c, f_l)
    if not grid_mode:
        return values
    nx, ny, nz = cfg.grid_res
    return ScalarGrid(values.reshape(nx, ny, nz, 1), cfg.extent)
