"""Two-branch panorama depth network with per-scale feature fusion.

One branch runs 2-D convolutions on the equirectangular image; the other
runs mesh convolutions on the sphere. At each scale the image features are
resampled onto the mesh and merged with the spherical features by one of
five strategies:

  gate        r * F_sp + z * F_eq, r and z sigmoid-gated from the pair
  bifuse      mean of (F_sp + M_eq * F_eq) and (F_eq + M_sp * F_sp)
  unifuse     F_sp + M * F_eq, single mask
  mesh_only   spherical branch passes through untouched
  image_only  resampled image features pass through untouched

A coarse-to-fine decoder unpools, concatenates the fused skip, and emits a
positive depth map (softplus head) at every level.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Parameters, Tape, Tensor
from .errors import ConfigError, ShapeError
from .icosphere import AdjacencyCache, MeshHierarchy
from .mesh_ops import MeshFeature, mesh_conv, mesh_conv_weight_shape, mesh_max_pool, mesh_res_block, mesh_unpool
from .metrics import multiscale_loss, valid_mask
from .projection import EquirectGrid, ProjectionTable, build_projection_table, e2s_resample, s2e_resample

FUSION_MODES = ("gate", "bifuse", "unifuse", "mesh_only", "image_only")

# softplus(HEAD_BIAS) == 2.0, so a fresh network predicts ~2m everywhere.
HEAD_BIAS = float(np.log(np.expm1(2.0)))


@dataclass(frozen=True)
class NetworkConfig:
    image_h: int = 64
    image_w: int = 128
    mr_hi: int = 5
    mr_lo: int = 2
    channels: tuple = (8, 16, 32, 64)
    fusion: str = "gate"
    loss_weights: tuple = (1.0, 0.5, 0.25, 0.125)
    lr: float = 0.01
    seed: int = 0

    @property
    def scales(self) -> int:
        return self.mr_hi - self.mr_lo + 1

    def __post_init__(self):
        if self.image_w != 2 * self.image_h:
            raise ConfigError(f"image must be Wx2H, got {self.image_h}x{self.image_w}")
        if not (0 <= self.mr_lo < self.mr_hi):
            raise ConfigError(f"need 0 <= mr_lo < mr_hi, got {self.mr_lo}, {self.mr_hi}")
        s = self.scales
        if len(self.channels) != s:
            raise ConfigError(f"{s} scales need {s} channel counts, got {len(self.channels)}")
        if len(self.loss_weights) != s:
            raise ConfigError(f"{s} scales need {s} loss weights, got {len(self.loss_weights)}")
        if self.image_h % (1 << (s - 1)) or self.image_h >> (s - 1) < 2:
            raise ConfigError(
                f"image height {self.image_h} cannot be halved {s - 1} times"
            )
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if any(w <= 0 for w in self.loss_weights):
            raise ConfigError("loss weights must be positive")
        if any(int(c) <= 0 for c in self.channels):
            raise ConfigError("channel counts must be positive")


def default_toy_config() -> NetworkConfig:
    return NetworkConfig()


PRESETS = {
    "toy": NetworkConfig(),
    # Full-resolution shape for real panoramas; far too heavy for CPU tests.
    "large": NetworkConfig(
        image_h=512,
        image_w=1024,
        mr_hi=7,
        mr_lo=2,
        channels=(64, 64, 128, 256, 512, 512),
        loss_weights=(1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125),
        lr=2e-4,
    ),
}

_INT_KEYS = ("image_h", "image_w", "mr_hi", "mr_lo", "seed")
_ALL_KEYS = set(_INT_KEYS) | {"channels", "fusion", "scales", "loss_weights", "lr"}


def config_from_dict(raw: dict) -> NetworkConfig:
    """Build a config from the flat string dict the config file format yields."""
    unknown = set(raw) - _ALL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    try:
        for key in _INT_KEYS:
            if key in raw:
                kwargs[key] = int(raw[key])
        if "lr" in raw:
            kwargs["lr"] = float(raw["lr"])
        if "channels" in raw:
            kwargs["channels"] = tuple(int(v) for v in raw["channels"].split(","))
        if "loss_weights" in raw:
            kwargs["loss_weights"] = tuple(float(v) for v in raw["loss_weights"].split(","))
    except ValueError as e:
        raise ConfigError(f"bad config value: {e}") from None
    if "fusion" in raw:
        kwargs["fusion"] = raw["fusion"].strip()
    cfg = NetworkConfig(**kwargs)
    if "scales" in raw and int(raw["scales"]) != cfg.scales:
        raise ConfigError(
            f"scales = {raw['scales']} contradicts mr range {cfg.mr_lo}..{cfg.mr_hi}"
        )
    return cfg


def config_to_dict(cfg: NetworkConfig) -> dict:
    return {
        "image_h": str(cfg.image_h),
        "image_w": str(cfg.image_w),
        "mr_hi": str(cfg.mr_hi),
        "mr_lo": str(cfg.mr_lo),
        "scales": str(cfg.scales),
        "channels": ",".join(str(c) for c in cfg.channels),
        "fusion": cfg.fusion,
        "loss_weights": ",".join(repr(float(w)) for w in cfg.loss_weights),
        "lr": repr(float(cfg.lr)),
        "seed": str(cfg.seed),
    }


# -- fusion strategies ----------------------------------------------------

def _as_gate(value, like: Tensor) -> Tensor:
    gate = value if isinstance(value, Tensor) else Tensor(value)
    if gate.data.ndim == 0:
        gate = Tensor(np.full(like.data.shape, float(gate.data)))
    if gate.data.shape != like.data.shape:
        raise ShapeError(f"gate override is {gate.data.shape}, features are {like.data.shape}")
    return gate


def gate_fuse(
    f_sp: Tensor,
    f_eq: Tensor,
    faf: np.ndarray,
    w_r: Tensor,
    b_r: Tensor,
    w_z: Tensor,
    b_z: Tensor,
    r_override=None,
    z_override=None,
) -> Tensor:
    """r * F_sp + z * F_eq with both gates driven by the concatenated pair.

    Overrides replace a computed gate wholesale; tests use them to pin the
    algebraic identities (r=1, z=0 passes the spherical branch through)."""
    g = ad.concat([f_sp, f_eq], axis=1)
    r = _as_gate(r_override, f_sp) if r_override is not None else ad.sigmoid(mesh_conv(g, faf, w_r, b_r))
    z = _as_gate(z_override, f_eq) if z_override is not None else ad.sigmoid(mesh_conv(g, faf, w_z, b_z))
    return ad.add(ad.mul(r, f_sp), ad.mul(z, f_eq))


def bifuse_variant(
    f_sp: Tensor,
    f_eq: Tensor,
    faf: np.ndarray,
    w_sp: Tensor,
    b_sp: Tensor,
    w_eq: Tensor,
    b_eq: Tensor,
    m_sp_override=None,
    m_eq_override=None,
) -> Tensor:
    """Symmetric exchange: average of the two cross-gated branches. Zero
    masks collapse it to the plain mean of the branches."""
    g = ad.concat([f_sp, f_eq], axis=1)
    m_eq = _as_gate(m_eq_override, f_eq) if m_eq_override is not None else ad.sigmoid(mesh_conv(g, faf, w_eq, b_eq))
    m_sp = _as_gate(m_sp_override, f_sp) if m_sp_override is not None else ad.sigmoid(mesh_conv(g, faf, w_sp, b_sp))
    to_sphere = ad.add(f_sp, ad.mul(m_eq, f_eq))
    to_image = ad.add(f_eq, ad.mul(m_sp, f_sp))
    return ad.mul(ad.add(to_sphere, to_image), Tensor(0.5))


def unifuse_variant(
    f_sp: Tensor,
    f_eq: Tensor,
    faf: np.ndarray,
    w_m: Tensor,
    b_m: Tensor,
    m_override=None,
) -> Tensor:
    """One-way: spherical branch plus masked image injection."""
    g = ad.concat([f_sp, f_eq], axis=1)
    m = _as_gate(m_override, f_eq) if m_override is not None else ad.sigmoid(mesh_conv(g, faf, w_m, b_m))
    return ad.add(f_sp, ad.mul(m, f_eq))


# -- differentiable image -> sphere transfer -------------------------------

def e2s_tensor(table: ProjectionTable, image: Tensor) -> Tensor:
    """(C, H, W) image tensor -> (F, C) by the table's bilinear taps."""
    c = image.data.shape[0]
    flat = ad.transpose(ad.reshape(image, (c, -1)), (1, 0))
    out = None
    for j in range(4):
        term = ad.mul(
            ad.gather(flat, table.e2s_index[:, j]),
            Tensor(table.e2s_weight[:, j : j + 1]),
        )
        out = term if out is None else ad.add(out, term)
    return out


def pool_faces_np(values: np.ndarray) -> np.ndarray:
    """Numpy twin of mesh_max_pool for ground-truth pyramids."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    return values.reshape(-1, 4).max(axis=1)


# -- the network ------------------------------------------------------------

class PanoDepthNet:
    """Holds parameters, projection tables, and adjacency for one config."""

    def __init__(
        self,
        config: NetworkConfig,
        hierarchy: MeshHierarchy | None = None,
        cache: AdjacencyCache | None = None,
    ):
        self.config = config
        self.hierarchy = hierarchy if hierarchy is not None else MeshHierarchy()
        self.cache = cache if cache is not None else AdjacencyCache()
        s = config.scales
        self.levels = [config.mr_hi - k for k in range(s)]  # fine -> coarse
        self.fafs = [self.cache.faf(self.hierarchy, mr) for mr in self.levels]
        self.tables = [
            build_projection_table(
                EquirectGrid(config.image_w >> k, config.image_h >> k),
                self.hierarchy,
                mr,
            )
            for k, mr in enumerate(self.levels)
        ]
        self.params = Parameters()
        self._build_params()

    # parameter construction

    def _build_params(self):
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        ch = [int(c) for c in cfg.channels]
        s = cfg.scales
        p = self.params

        def conv2d_param(name, cin, cout, k):
            fan = cin * k * k
            p.add(f"{name}.w", rng.normal(0.0, np.sqrt(2.0 / fan), size=(cout, cin, k, k)))
            p.add(f"{name}.b", np.zeros(cout))

        def mesh_param(name, cin, cout, scale=1.0):
            fan = 4 * cin
            p.add(f"{name}.w", scale * rng.normal(0.0, np.sqrt(2.0 / fan), size=mesh_conv_weight_shape(cin, cout)))
            p.add(f"{name}.b", np.zeros(cout))

        if cfg.fusion != "mesh_only":
            conv2d_param("img.stem", 3, ch[0], 3)
            for k in range(1, s):
                conv2d_param(f"img.down{k}", ch[k - 1], ch[k], 3)
            for k in range(s):
                conv2d_param(f"img.align{k}", ch[k], ch[k], 1)

        if cfg.fusion != "image_only":
            mesh_param("mesh.stem", 3, ch[0])
            for k in range(s):
                cin = ch[k - 1] if k else ch[0]
                mesh_param(f"mesh.block{k}.conv1", cin, ch[k])
                mesh_param(f"mesh.block{k}.conv2", ch[k], ch[k])
                if cin != ch[k]:
                    p.add(
                        f"mesh.block{k}.skip.w",
                        rng.normal(0.0, np.sqrt(2.0 / cin), size=(cin, ch[k])),
                    )

        if cfg.fusion == "gate":
            for k in range(s):
                mesh_param(f"fuse{k}.r", 2 * ch[k], ch[k])
                mesh_param(f"fuse{k}.z", 2 * ch[k], ch[k])
        elif cfg.fusion == "bifuse":
            for k in range(s):
                mesh_param(f"fuse{k}.msp", 2 * ch[k], ch[k])
                mesh_param(f"fuse{k}.meq", 2 * ch[k], ch[k])
        elif cfg.fusion == "unifuse":
            for k in range(s):
                mesh_param(f"fuse{k}.m", 2 * ch[k], ch[k])

        mesh_param("dec.bottom", ch[s - 1], ch[s - 1])
        for k in range(s - 2, -1, -1):
            mesh_param(f"dec.up{k}", ch[k + 1] + ch[k], ch[k])
        for k in range(s):
            mesh_param(f"head{k}", ch[k], 1, scale=0.01)
            self.params[f"head{k}.b"].data[:] = HEAD_BIAS

    # forward pieces

    def _image_features(self, rgb: np.ndarray) -> list[Tensor]:
        p = self.params
        x = Tensor(np.ascontiguousarray(rgb.transpose(2, 0, 1))[None])
        feats = [ad.relu(ad.conv2d(x, p["img.stem.w"], p["img.stem.b"]))]
        for k in range(1, self.config.scales):
            feats.append(
                ad.relu(ad.conv2d(feats[-1], p[f"img.down{k}.w"], p[f"img.down{k}.b"], stride=2))
            )
        on_sphere = []
        for k, feat in enumerate(feats):
            aligned = ad.conv2d(feat, p[f"img.align{k}.w"], p[f"img.align{k}.b"])
            c = aligned.data.shape[1]
            on_sphere.append(e2s_tensor(self.tables[k], ad.reshape(aligned, (c,) + aligned.data.shape[2:])))
        return on_sphere

    def _mesh_features(self, rgb: np.ndarray) -> list[Tensor]:
        p = self.params
        face_rgb = Tensor(e2s_resample(self.tables[0], rgb))
        x = ad.relu(mesh_conv(face_rgb, self.fafs[0], p["mesh.stem.w"], p["mesh.stem.b"]))
        feats = []
        for k in range(self.config.scales):
            if k:
                x = mesh_max_pool(x)
            skip = p[f"mesh.block{k}.skip.w"] if f"mesh.block{k}.skip.w" in p else None
            x = mesh_res_block(
                x,
                self.fafs[k],
                p[f"mesh.block{k}.conv1.w"],
                p[f"mesh.block{k}.conv1.b"],
                p[f"mesh.block{k}.conv2.w"],
                p[f"mesh.block{k}.conv2.b"],
                skip,
            )
            feats.append(x)
        return feats

    def _fuse(self, k: int, f_sp: Tensor | None, f_eq: Tensor | None) -> Tensor:
        mode = self.config.fusion
        if mode == "mesh_only":
            return f_sp
        if mode == "image_only":
            return f_eq
        p, faf = self.params, self.fafs[k]
        if mode == "gate":
            return gate_fuse(
                f_sp, f_eq, faf,
                p[f"fuse{k}.r.w"], p[f"fuse{k}.r.b"],
                p[f"fuse{k}.z.w"], p[f"fuse{k}.z.b"],
            )
        if mode == "bifuse":
            return bifuse_variant(
                f_sp, f_eq, faf,
                p[f"fuse{k}.msp.w"], p[f"fuse{k}.msp.b"],
                p[f"fuse{k}.meq.w"], p[f"fuse{k}.meq.b"],
            )
        return unifuse_variant(f_sp, f_eq, faf, p[f"fuse{k}.m.w"], p[f"fuse{k}.m.b"])

    def forward(self, rgb: np.ndarray) -> list[MeshFeature]:
        """RGB (H, W, 3) float in [0, 1] -> depth maps, one per level,
        ordered coarse to fine (ascending mr)."""
        cfg = self.config
        rgb = np.asarray(rgb, dtype=np.float64)
        if rgb.shape != (cfg.image_h, cfg.image_w, 3):
            raise ShapeError(f"rgb is {rgb.shape}, config wants ({cfg.image_h}, {cfg.image_w}, 3)")
        p, s = self.params, cfg.scales
        eq = self._image_features(rgb) if cfg.fusion != "mesh_only" else [None] * s
        sp = self._mesh_features(rgb) if cfg.fusion != "image_only" else [None] * s
        fused = [self._fuse(k, sp[k], eq[k]) for k in range(s)]

        outputs = []
        d = ad.relu(mesh_conv(fused[s - 1], self.fafs[s - 1], p["dec.bottom.w"], p["dec.bottom.b"]))
        outputs.append(self._head(s - 1, d))
        for k in range(s - 2, -1, -1):
            cat = ad.concat([mesh_unpool(d), fused[k]], axis=1)
            d = ad.relu(mesh_conv(cat, self.fafs[k], p[f"dec.up{k}.w"], p[f"dec.up{k}.b"]))
            outputs.append(self._head(k, d))
        return [MeshFeature(self.levels[s - 1 - i], t) for i, t in enumerate(outputs)]

    def _head(self, k: int, d: Tensor) -> Tensor:
        p = self.params
        return ad.softplus(mesh_conv(d, self.fafs[k], p[f"head{k}.w"], p[f"head{k}.b"]))

    # training targets and loss

    def gt_pyramid(self, depth: np.ndarray) -> list[np.ndarray]:
        """Per-level ground truth, coarse to fine, from one distance image."""
        cfg = self.config
        depth = np.asarray(depth, dtype=np.float64)
        if depth.shape != (cfg.image_h, cfg.image_w):
            raise ShapeError(f"depth is {depth.shape}, config wants ({cfg.image_h}, {cfg.image_w})")
        finest = e2s_resample(self.tables[0], depth[:, :, None]).ravel()
        pyramid = [finest]
        for _ in range(cfg.scales - 1):
            pyramid.append(pool_faces_np(pyramid[-1]))
        return pyramid[::-1]

    def loss(self, outputs: list[MeshFeature], depth: np.ndarray) -> Tensor:
        cfg = self.config
        targets = self.gt_pyramid(depth)
        preds = [o.values for o in outputs]
        masks = [valid_mask(t) for t in targets]
        weights = [cfg.loss_weights[cfg.mr_hi - o.mr] for o in outputs]
        return multiscale_loss(preds, targets, masks, weights)

    def predict(self, rgb: np.ndarray) -> np.ndarray:
        """Finest-level per-face depth, (F,) float64."""
        return self.forward(rgb)[-1].values.data.ravel().copy()

    def depth_image(self, face_depth: np.ndarray) -> np.ndarray:
        """Paint per-face depth back onto the equirectangular grid."""
        return s2e_resample(self.tables[0], np.asarray(face_depth).reshape(-1, 1))[:, :, 0]

    def save(self, path):
        self.params.save(path)

    def load(self, path):
        self.params.load(path)


@dataclass
class TrainState:
    net: PanoDepthNet
    opt: Adam
    step: int = 0
    history: list = field(default_factory=list)


def make_train_state(config: NetworkConfig, hierarchy=None, cache=None) -> TrainState:
    net = PanoDepthNet(config, hierarchy, cache)
    return TrainState(net=net, opt=Adam(net.params, lr=config.lr))


def train_step(state: TrainState, rgb: np.ndarray, depth: np.ndarray) -> float:
    """One forward/backward/update pass on a single panorama."""
    state.opt.zero_grad()
    with Tape() as tape:
        outputs = state.net.forward(rgb)
        loss = state.net.loss(outputs, depth)
    tape.backward(loss)
    state.opt.step()
    state.step += 1
    value = loss.item()
    state.history.append(value)
    return value


def ablation_config(base: NetworkConfig, fusion: str) -> NetworkConfig:
    return replace(base, fusion=fusion)
