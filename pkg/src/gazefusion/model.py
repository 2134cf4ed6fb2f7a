"""Dual-view token-fusion classifier and the two-stream CNN baseline.

The fusion model projects both camera views' token sequences through one
shared linear layer, prepends a learnable [CLS] token, adds optional
positional and per-view segment embeddings, runs a pre-norm transformer
encoder, and maps the final [CLS] representation through an MLP head to a
single logit. Sigmoid is applied only at inference/metric time.

Checkpoints use the "GFCK" binary format documented in docs/formats.md;
round-trips are bit-exact and every stored shape is re-derived from the
config on load.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from typing import BinaryIO

import numpy as np

from . import tensor as T
from .rng import named_stream

CHECKPOINT_MAGIC = b"GFCK"
CHECKPOINT_VERSION = 1
TASKS = ("MG", "JA")


class CheckpointError(Exception):
    """Base class for checkpoint persistence failures."""


class CorruptCheckpointError(CheckpointError):
    """File is truncated, has bad magic, or an undecodable record."""


class CheckpointVersionError(CheckpointError):
    """File was written by an incompatible format version."""


class CheckpointMismatchError(CheckpointError):
    """Checkpoint does not fit the requested model (kind, shapes, names)."""


@dataclass
class FusionModelConfig:
    """Hyperparameters of the token-fusion classifier (defaults: production)."""

    feature_dim_in: int = 1024
    embed_dim: int = 512
    encoder_layers: int = 3
    attention_heads: int = 4
    dropout: float = 0.426
    head_layer_sizes: tuple[int, ...] = (512, 128, 64, 1)
    tokens_per_view: int = 64
    use_positional_embedding: bool = True
    use_view_segment_embedding: bool = True

    def __post_init__(self):
        self.head_layer_sizes = tuple(self.head_layer_sizes)

    def validate(self) -> None:
        if self.feature_dim_in < 1:
            raise T.ConfigError(f"feature_dim_in must be positive, got {self.feature_dim_in}")
        if self.embed_dim < 1:
            raise T.ConfigError(f"embed_dim must be positive, got {self.embed_dim}")
        if self.encoder_layers < 1:
            raise T.ConfigError(f"encoder_layers must be positive, got {self.encoder_layers}")
        if self.attention_heads < 1 or self.embed_dim % self.attention_heads != 0:
            raise T.ConfigError(
                f"embed_dim ({self.embed_dim}) must be divisible by "
                f"attention_heads ({self.attention_heads})")
        if not 0.0 <= self.dropout < 1.0:
            raise T.ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if len(self.head_layer_sizes) < 2 or self.head_layer_sizes[0] != self.embed_dim \
                or self.head_layer_sizes[-1] != 1:
            raise T.ConfigError(
                f"head_layer_sizes must start at embed_dim ({self.embed_dim}) and end at 1, "
                f"got {self.head_layer_sizes}")
        if self.tokens_per_view < 1:
            raise T.ConfigError(f"tokens_per_view must be positive, got {self.tokens_per_view}")

    @property
    def sequence_length(self) -> int:
        return 1 + 2 * self.tokens_per_view

    @property
    def ff_hidden_dim(self) -> int:
        return 4 * self.embed_dim


@dataclass
class BaselineCnnConfig:
    """Two-stream convolutional baseline: exactly three conv blocks per stream."""

    channels: tuple[int, int, int] = (8, 16, 32)
    kernel_sizes: tuple[int, int, int] = (3, 3, 3)
    fc_sizes: tuple[int, ...] = (64, 32, 1)
    dropout: float = 0.426
    in_channels: int = 3

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.kernel_sizes = tuple(self.kernel_sizes)
        self.fc_sizes = tuple(self.fc_sizes)

    def validate(self) -> None:
        if len(self.channels) != 3:
            raise T.ConfigError(f"channels must list exactly 3 blocks, got {self.channels}")
        if len(self.kernel_sizes) != 3:
            raise T.ConfigError(f"kernel_sizes must list exactly 3 blocks, got {self.kernel_sizes}")
        if any(c < 1 for c in self.channels) or any(k < 1 for k in self.kernel_sizes):
            raise T.ConfigError("channels and kernel_sizes must be positive")
        if len(self.fc_sizes) < 2 or self.fc_sizes[-1] != 1:
            raise T.ConfigError(f"fc_sizes must end at 1, got {self.fc_sizes}")
        if self.fc_sizes[0] != 2 * self.channels[-1]:
            raise T.ConfigError(
                f"fc_sizes must start at 2 * channels[-1] = {2 * self.channels[-1]} "
                f"(two concatenated pooled streams), got {self.fc_sizes[0]}")
        if not 0.0 <= self.dropout < 1.0:
            raise T.ConfigError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class ModelCheckpoint:
    """Serializable snapshot: config, named weights, and training metadata."""

    kind: str  # "fusion" | "cnn"
    config: FusionModelConfig | BaselineCnnConfig
    weights: dict[str, np.ndarray]
    epoch: int | None = None
    seed: int | None = None
    val_f1: float | None = None
    task: str = "MG"

    def __post_init__(self):
        if self.task not in TASKS:
            raise T.ConfigError(f"task must be one of {TASKS}, got {self.task!r}")


# ---------------------------------------------------------------------------
# parameter shape derivation (single source of truth for init and load)


def fusion_param_shapes(config: FusionModelConfig) -> dict[str, tuple[int, ...]]:
    config.validate()
    e = config.embed_dim
    shapes: dict[str, tuple[int, ...]] = {
        "proj.weight": (config.feature_dim_in, e),
        "proj.bias": (e,),
        "cls": (1, e),
    }
    if config.use_positional_embedding:
        shapes["pos_embedding"] = (config.sequence_length, e)
    if config.use_view_segment_embedding:
        shapes["segment_embedding"] = (2, e)
    for i in range(config.encoder_layers):
        p = f"encoder.{i}"
        shapes[f"{p}.ln1.gamma"] = (e,)
        shapes[f"{p}.ln1.beta"] = (e,)
        for name in ("q", "k", "v", "out"):
            shapes[f"{p}.attn.{name}.weight"] = (e, e)
            shapes[f"{p}.attn.{name}.bias"] = (e,)
        shapes[f"{p}.ln2.gamma"] = (e,)
        shapes[f"{p}.ln2.beta"] = (e,)
        shapes[f"{p}.ff.w1.weight"] = (e, config.ff_hidden_dim)
        shapes[f"{p}.ff.w1.bias"] = (config.ff_hidden_dim,)
        shapes[f"{p}.ff.w2.weight"] = (config.ff_hidden_dim, e)
        shapes[f"{p}.ff.w2.bias"] = (e,)
    sizes = config.head_layer_sizes
    for j in range(len(sizes) - 1):
        shapes[f"head.{j}.weight"] = (sizes[j], sizes[j + 1])
        shapes[f"head.{j}.bias"] = (sizes[j + 1],)
        if j < len(sizes) - 2:
            shapes[f"head.{j}.ln.gamma"] = (sizes[j + 1],)
            shapes[f"head.{j}.ln.beta"] = (sizes[j + 1],)
    return shapes


def cnn_param_shapes(config: BaselineCnnConfig) -> dict[str, tuple[int, ...]]:
    config.validate()
    shapes: dict[str, tuple[int, ...]] = {}
    for stream in ("a", "b"):
        cin = config.in_channels
        for i, (cout, k) in enumerate(zip(config.channels, config.kernel_sizes)):
            shapes[f"stream_{stream}.block{i}.conv.weight"] = (cout, cin, k, k)
            shapes[f"stream_{stream}.block{i}.conv.bias"] = (cout, 1, 1)
            cin = cout
    sizes = config.fc_sizes
    for j in range(len(sizes) - 1):
        shapes[f"fc.{j}.weight"] = (sizes[j], sizes[j + 1])
        shapes[f"fc.{j}.bias"] = (sizes[j + 1],)
    return shapes


def _init_param(name: str, shape: tuple[int, ...], rng, dtype) -> T.Tensor:
    if name.endswith((".gamma",)):
        data = np.ones(shape)
    elif name.endswith((".beta", ".bias")):
        data = np.zeros(shape)
    elif name in ("cls", "pos_embedding", "segment_embedding"):
        data = rng.normal(0.0, 0.02, size=shape)
    elif name.endswith(".conv.weight"):
        cout, cin, kh, kw = shape
        fan_in, fan_out = cin * kh * kw, cout * kh * kw
        a = math.sqrt(6.0 / (fan_in + fan_out))
        data = rng.uniform(-a, a, size=shape)
    elif name.endswith(".weight"):
        fan_in, fan_out = shape
        a = math.sqrt(6.0 / (fan_in + fan_out))
        data = rng.uniform(-a, a, size=shape)
    else:
        raise T.ConfigError(f"no init rule for parameter {name!r}")
    return T.Tensor(data.astype(dtype), requires_grad=True, dtype=dtype)


class _ModelBase:
    kind = ""

    def __init__(self, config, seed: int, dtype=np.float32):
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = named_stream(seed, f"{self.kind}-init")
        self.params: dict[str, T.Tensor] = {
            name: _init_param(name, shape, rng, self.dtype)
            for name, shape in self.param_shapes().items()
        }
        self._dropout_rng = named_stream(seed, f"{self.kind}-dropout")

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        raise NotImplementedError

    def parameters(self) -> dict[str, T.Tensor]:
        return self.params

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def _linear(self, x: T.Tensor, name: str) -> T.Tensor:
        return T.add(T.matmul(x, self.params[f"{name}.weight"]), self.params[f"{name}.bias"])

    def _dropout(self, x: T.Tensor, train_mode: bool) -> T.Tensor:
        return T.dropout(x, self.config.dropout, train_mode, self._dropout_rng)

    def to_checkpoint(self, epoch=None, seed=None, val_f1=None, task="MG") -> ModelCheckpoint:
        return ModelCheckpoint(
            kind=self.kind,
            config=self.config,
            weights={name: p.data.copy() for name, p in self.params.items()},
            epoch=epoch, seed=seed if seed is not None else self.seed,
            val_f1=val_f1, task=task)

    def load_weights(self, checkpoint: ModelCheckpoint) -> None:
        if checkpoint.kind != self.kind:
            raise CheckpointMismatchError(
                f"checkpoint holds a {checkpoint.kind!r} model, not {self.kind!r}")
        expected = self.param_shapes()
        if set(checkpoint.weights) != set(expected):
            missing = set(expected) - set(checkpoint.weights)
            extra = set(checkpoint.weights) - set(expected)
            raise CheckpointMismatchError(
                f"weight names do not match config (missing={sorted(missing)}, "
                f"unexpected={sorted(extra)})")
        for name, arr in checkpoint.weights.items():
            if tuple(arr.shape) != expected[name]:
                raise CheckpointMismatchError(
                    f"weight {name!r} has shape {tuple(arr.shape)}, config requires {expected[name]}")
            self.params[name] = T.Tensor(arr.astype(self.dtype), requires_grad=True,
                                         dtype=self.dtype)


class FusionModel(_ModelBase):
    kind = "fusion"

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return fusion_param_shapes(self.config)

    def project(self, tokens: np.ndarray) -> np.ndarray:
        """Apply the shared view projection (inference helper, no-grad)."""
        with T.no_grad():
            x = T.Tensor(np.asarray(tokens), dtype=self.dtype)
            return self._linear(x, "proj").data

    def _check_view(self, tokens, which: str) -> T.Tensor:
        if hasattr(tokens, "tokens"):  # TokenSequence and friends
            tokens = tokens.tokens
        arr = np.asarray(tokens)
        expected = (self.config.tokens_per_view, self.config.feature_dim_in)
        if arr.shape != expected:
            raise T.ShapeError(
                f"view {which}: token array has shape {arr.shape}, config requires {expected}")
        return T.Tensor(arr.astype(self.dtype), dtype=self.dtype)

    def relu_preactivations(self, tokens_a, tokens_b) -> list[tuple[str, np.ndarray]]:
        """Capture every ReLU input and the bias parameter that shifts it.

        Diagnostic hook: lets callers confirm how far units sit from the
        activation kink (dead-unit checks, gradient-oracle conditioning).
        """
        capture: list[tuple[str, np.ndarray]] = []
        with T.no_grad():
            self.forward(tokens_a, tokens_b, train_mode=False, _capture=capture)
        return capture

    def _attention(self, x: T.Tensor, prefix: str, train_mode: bool) -> T.Tensor:
        cfg = self.config
        dh = cfg.embed_dim // cfg.attention_heads
        scale = 1.0 / math.sqrt(dh)
        q = self._linear(x, f"{prefix}.attn.q")
        k = self._linear(x, f"{prefix}.attn.k")
        v = self._linear(x, f"{prefix}.attn.v")
        heads = []
        for h in range(cfg.attention_heads):
            lo, hi = h * dh, (h + 1) * dh
            qh, kh, vh = (T.slice_cols(t, lo, hi) for t in (q, k, v))
            scores = T.mul(T.matmul(qh, T.transpose(kh)), scale)
            weights = T.softmax(scores, axis=-1)
            weights = self._dropout(weights, train_mode)
            heads.append(T.matmul(weights, vh))
        merged = heads[0] if len(heads) == 1 else T.concat(heads, axis=1)
        return self._linear(merged, f"{prefix}.attn.out")

    def _encoder_layer(self, x: T.Tensor, i: int, train_mode: bool, _capture=None) -> T.Tensor:
        p = f"encoder.{i}"
        normed = T.layer_norm(x, self.params[f"{p}.ln1.gamma"], self.params[f"{p}.ln1.beta"])
        x = T.add(x, self._attention(normed, p, train_mode))
        normed = T.layer_norm(x, self.params[f"{p}.ln2.gamma"], self.params[f"{p}.ln2.beta"])
        pre = self._linear(normed, f"{p}.ff.w1")
        if _capture is not None:
            _capture.append((f"{p}.ff.w1.bias", pre.data.copy()))
        ff = self._linear(T.relu(pre), f"{p}.ff.w2")
        ff = self._dropout(ff, train_mode)
        return T.add(x, ff)

    def forward(self, tokens_a: np.ndarray, tokens_b: np.ndarray,
                train_mode: bool = False, _capture=None) -> T.Tensor:
        """Fuse two views into a single raw logit (scalar tensor)."""
        cfg = self.config
        pa = self._linear(self._check_view(tokens_a, "A"), "proj")
        pb = self._linear(self._check_view(tokens_b, "B"), "proj")
        if cfg.use_view_segment_embedding:
            seg = self.params["segment_embedding"]
            n = cfg.tokens_per_view
            pa = T.add(pa, T.embedding_lookup(seg, np.zeros(n, dtype=np.intp)))
            pb = T.add(pb, T.embedding_lookup(seg, np.ones(n, dtype=np.intp)))
        seq = T.concat([self.params["cls"], pa, pb], axis=0)
        if cfg.use_positional_embedding:
            seq = T.add(seq, self.params["pos_embedding"])
        for i in range(cfg.encoder_layers):
            seq = self._encoder_layer(seq, i, train_mode, _capture=_capture)
        h = T.embedding_lookup(seq, [0])
        sizes = cfg.head_layer_sizes
        for j in range(len(sizes) - 1):
            h = self._linear(h, f"head.{j}")
            if j < len(sizes) - 2:
                h = T.layer_norm(h, self.params[f"head.{j}.ln.gamma"],
                                 self.params[f"head.{j}.ln.beta"])
                if _capture is not None:
                    _capture.append((f"head.{j}.ln.beta", h.data.copy()))
                h = T.relu(h)
                h = self._dropout(h, train_mode)
        return T.reshape(h, ())


class CnnBaseline(_ModelBase):
    kind = "cnn"

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return cnn_param_shapes(self.config)

    def _stream(self, image: np.ndarray, stream: str, train_mode: bool) -> T.Tensor:
        arr = np.asarray(image)
        if arr.ndim != 3 or arr.shape[0] != self.config.in_channels:
            raise T.ShapeError(
                f"stream {stream}: expected ({self.config.in_channels}, h, w) image, "
                f"got shape {arr.shape}")
        x = T.Tensor(arr.astype(self.dtype), dtype=self.dtype)
        for i, k in enumerate(self.config.kernel_sizes):
            h, w = x.shape[1], x.shape[2]
            if h + 2 * (k // 2) < k or w + 2 * (k // 2) < k or h < 2 or w < 2:
                raise T.ConfigError(
                    f"stream {stream} block {i}: spatial extent {h}x{w} underflows "
                    f"(kernel {k}, pool 2)")
            x = T.conv2d(x, self.params[f"stream_{stream}.block{i}.conv.weight"],
                         stride=1, padding=k // 2)
            x = T.add(x, self.params[f"stream_{stream}.block{i}.conv.bias"])
            x = T.relu(x)
            x = T.max_pool2d(x, kernel=2)
        pooled = T.adaptive_avg_pool2d(x)
        return T.reshape(pooled, (1, pooled.shape[0]))

    def forward(self, image_a: np.ndarray, image_b: np.ndarray,
                train_mode: bool = False) -> T.Tensor:
        """Two independent conv streams, concatenated, to a single raw logit."""
        fa = self._stream(image_a, "a", train_mode)
        fb = self._stream(image_b, "b", train_mode)
        h = T.concat([fa, fb], axis=1)
        sizes = self.config.fc_sizes
        for j in range(len(sizes) - 1):
            h = self._linear(h, f"fc.{j}")
            if j < len(sizes) - 2:
                h = T.relu(h)
                h = self._dropout(h, train_mode)
        return T.reshape(h, ())


def build_fusion_model(config: FusionModelConfig, seed: int, dtype=np.float32) -> FusionModel:
    return FusionModel(config, seed, dtype=dtype)


def fusion_forward(model: FusionModel, tokens_a, tokens_b, train_mode: bool = False) -> T.Tensor:
    return model.forward(tokens_a, tokens_b, train_mode=train_mode)


def build_cnn_baseline(config: BaselineCnnConfig, seed: int, dtype=np.float32) -> CnnBaseline:
    return CnnBaseline(config, seed, dtype=dtype)


def cnn_forward(model: CnnBaseline, image_a, image_b, train_mode: bool = False) -> T.Tensor:
    return model.forward(image_a, image_b, train_mode=train_mode)


# ---------------------------------------------------------------------------
# GFCK checkpoint persistence

_CONFIG_CLASSES = {"fusion": FusionModelConfig, "cnn": BaselineCnnConfig}


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CorruptCheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def save_checkpoint(checkpoint, path) -> None:
    """Persist a ModelCheckpoint (or a model, snapshotted as-is) to ``path``."""
    if isinstance(checkpoint, _ModelBase):
        checkpoint = checkpoint.to_checkpoint()
    if checkpoint.kind not in _CONFIG_CLASSES:
        raise CheckpointMismatchError(f"unknown model kind {checkpoint.kind!r}")
    config_json = json.dumps(asdict(checkpoint.config), sort_keys=True).encode("utf-8")
    meta = {"epoch": checkpoint.epoch, "seed": checkpoint.seed,
            "val_f1": checkpoint.val_f1, "task": checkpoint.task}
    meta_json = json.dumps(meta, sort_keys=True).encode("utf-8")
    kind_bytes = checkpoint.kind.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<B", len(kind_bytes)))
        fh.write(kind_bytes)
        fh.write(struct.pack("<I", len(config_json)))
        fh.write(config_json)
        fh.write(struct.pack("<I", len(meta_json)))
        fh.write(meta_json)
        fh.write(struct.pack("<I", len(checkpoint.weights)))
        for name, arr in checkpoint.weights.items():
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise CorruptCheckpointError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                f"checkpoint format version {version} unsupported (expected {CHECKPOINT_VERSION})")
        (kind_len,) = struct.unpack("<B", _read_exact(fh, 1, "kind length"))
        kind = _read_exact(fh, kind_len, "kind").decode("utf-8")
        if kind not in _CONFIG_CLASSES:
            raise CorruptCheckpointError(f"unknown model kind {kind!r}")
        (config_len,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        try:
            config_dict = json.loads(_read_exact(fh, config_len, "config").decode("utf-8"))
            config = _CONFIG_CLASSES[kind](**config_dict)
        except (ValueError, TypeError) as exc:
            raise CorruptCheckpointError(f"undecodable config block: {exc}") from exc
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "metadata length"))
        try:
            meta = json.loads(_read_exact(fh, meta_len, "metadata").decode("utf-8"))
        except ValueError as exc:
            raise CorruptCheckpointError(f"undecodable metadata block: {exc}") from exc
        (n_records,) = struct.unpack("<I", _read_exact(fh, 4, "record count"))
        weights: dict[str, np.ndarray] = {}
        for _ in range(n_records):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "weight name length"))
            name = _read_exact(fh, name_len, "weight name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, f"{name} rank"))
            shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, f"{name} extents"))
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            payload = _read_exact(fh, 4 * count, f"{name} payload")
            weights[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        if fh.read(1):
            raise CorruptCheckpointError("trailing bytes after last weight record")
    checkpoint = ModelCheckpoint(kind=kind, config=config, weights=weights,
                                 epoch=meta.get("epoch"), seed=meta.get("seed"),
                                 val_f1=meta.get("val_f1"), task=meta.get("task", "MG"))
    expected = (fusion_param_shapes(config) if kind == "fusion" else cnn_param_shapes(config))
    if set(weights) != set(expected):
        raise CheckpointMismatchError("weight records do not match the stored config")
    for name, arr in weights.items():
        if tuple(arr.shape) != expected[name]:
            raise CheckpointMismatchError(
                f"weight {name!r} has shape {tuple(arr.shape)}, config requires {expected[name]}")
    return checkpoint


def model_from_checkpoint(checkpoint: ModelCheckpoint, dtype=np.float32):
    """Rebuild a model of the checkpoint's kind and load its weights."""
    if checkpoint.kind == "fusion":
        model = FusionModel(checkpoint.config,
                            seed=checkpoint.seed if checkpoint.seed is not None else 0,
                            dtype=dtype)
    elif checkpoint.kind == "cnn":
        model = CnnBaseline(checkpoint.config,
                            seed=checkpoint.seed if checkpoint.seed is not None else 0,
                            dtype=dtype)
    else:
        raise CheckpointMismatchError(f"unknown model kind {checkpoint.kind!r}")
    model.load_weights(checkpoint)
    return model
