"""Model configuration: patching strategies, encoder/decoder shapes."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

SEGMENT_SHAPE = (2, 200, 128)
MASK_RATIO = 0.8

PATCH_DIMS = {"patch_based": (2, 8, 16), "time_based": (2, 2, 128)}
WINDOW_SIZES = {"patch_based": [2, 5, 10, 25, 50, 100, 0, 0],
                "time_based": [2, 5, 10, 25, 50, 0, 0, 0]}


@dataclass
class PatchConfig:
    strategy: str = "patch_based"
    embed_dim: int = 64
    input_shape: tuple = SEGMENT_SHAPE
    dims_override: tuple | None = None  # tests use tiny inputs/patches

    def __post_init__(self):
        if self.strategy not in PATCH_DIMS:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.input_shape = tuple(self.input_shape)
        if self.dims_override is not None:
            self.dims_override = tuple(self.dims_override)

    @property
    def patch_dims(self) -> tuple:
        return self.dims_override or PATCH_DIMS[self.strategy]

    @property
    def grid(self) -> tuple:
        c, t, f = self.patch_dims
        sc, st, sf = self.input_shape
        if sc % c or st % t or sf % f:
            raise ValueError(f"patch dims {self.patch_dims} do not divide {self.input_shape}")
        return (st // t, sf // f)  # (time patches, freq patches)

    @property
    def n_patches(self) -> int:
        nt, nf = self.grid
        return nt * nf

    @property
    def patch_values(self) -> int:
        c, t, f = self.patch_dims
        return c * t * f


@dataclass
class EncoderConfig:
    backbone: str = "transformer"  # or "mamba"
    depth: int = 2
    dim: int = 64
    heads: int = 4
    state_dim: int = 16
    conv_kernel: int = 4
    expand: int = 2
    cls_token: bool = True
    exact_discretization: bool = False

    def __post_init__(self):
        if self.backbone not in ("transformer", "mamba"):
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.backbone == "transformer" and self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by {self.heads} heads")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")


@dataclass
class DecoderConfig:
    dim: int = 32
    heads: int = 4
    window_sizes: list = field(default_factory=lambda: list(WINDOW_SIZES["patch_based"]))

    @property
    def depth(self) -> int:
        return len(self.window_sizes)

    def validate(self, n_patches: int):
        if self.dim % self.heads:
            raise ValueError(f"decoder dim {self.dim} not divisible by {self.heads} heads")
        for w in self.window_sizes:
            if w and n_patches % w:
                raise ValueError(f"window {w} does not divide sequence length {n_patches}")


@dataclass
class ModelConfig:
    patch: PatchConfig = field(default_factory=PatchConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    mask_ratio: float = MASK_RATIO
    init_seed: int = 0

    def __post_init__(self):
        if isinstance(self.patch, dict):
            self.patch = PatchConfig(**self.patch)
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)
        if isinstance(self.decoder, dict):
            self.decoder = DecoderConfig(**self.decoder)
        self.decoder.validate(self.patch.n_patches)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def toy_config(strategy: str = "patch_based", backbone: str = "transformer",
               init_seed: int = 0) -> ModelConfig:
    """Desk-scale defaults: 64-dim 2-layer encoder, 32-dim 8-layer decoder."""
    return ModelConfig(
        patch=PatchConfig(strategy=strategy, embed_dim=64),
        encoder=EncoderConfig(backbone=backbone, depth=2, dim=64),
        decoder=DecoderConfig(dim=32, heads=4,
                              window_sizes=list(WINDOW_SIZES[strategy])),
        init_seed=init_seed)
