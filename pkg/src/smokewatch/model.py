"""The proposed smoking classifier: five stride-2 backbone convolutions, two
shape-preserving neck convolutions, then flatten -> dense -> ReLU -> dense ->
softmax over the two classes.

Every layer uses ReLU. Parameters are float32 and initialized with He fan-in
scaling from a seeded generator, so identical (seed, config) pairs produce
bit-identical models.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, WeightsFormatError
from .tensor import (
    ConvParams,
    DenseParams,
    Tensor,
    conv2d,
    conv2d_grad,
    dense,
    dense_grad,
    flatten,
    relu,
    relu_grad,
    softmax,
    softmax_cross_entropy,
    softmax_cross_entropy_grad,
)

N_BACKBONE = 5
N_NECK = 2

WEIGHTS_MAGIC = b"EXWT"
WEIGHTS_VERSION = 1


@dataclass
class ModelConfig:
    input_size: int = 640
    input_channels: int = 3
    backbone_channels: tuple[int, ...] = (64, 128, 256, 512, 1024)
    neck_channels: tuple[int, ...] = (1024, 1024)
    hidden_dim: int = 128
    num_classes: int = 2
    kernel: int = 3
    stride_backbone: int = 2
    stride_neck: int = 1

    def __post_init__(self):
        self.backbone_channels = tuple(int(c) for c in self.backbone_channels)
        self.neck_channels = tuple(int(c) for c in self.neck_channels)
        if self.input_size < 32 or self.input_size % 32 != 0:
            raise ValueError(
                f"input_size must be a positive multiple of 32 "
                f"(five stride-2 halvings), got {self.input_size}"
            )
        if self.input_channels < 1:
            raise ValueError(f"input_channels must be >= 1, got {self.input_channels}")
        if len(self.backbone_channels) != N_BACKBONE:
            raise ValueError(
                f"backbone needs exactly {N_BACKBONE} channel counts, "
                f"got {len(self.backbone_channels)}"
            )
        if len(self.neck_channels) != N_NECK:
            raise ValueError(
                f"neck needs exactly {N_NECK} channel counts, got {len(self.neck_channels)}"
            )
        if any(c < 1 for c in self.backbone_channels + self.neck_channels):
            raise ValueError("channel counts must all be >= 1")
        if self.hidden_dim < 1 or self.num_classes < 2:
            raise ValueError("hidden_dim must be >= 1 and num_classes >= 2")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd so padding preserves shape, got {self.kernel}")
        if self.stride_backbone != 2:
            raise ValueError("backbone stride is fixed at 2 (each layer halves the image)")
        if self.stride_neck != 1:
            raise ValueError("neck stride is fixed at 1 (shape-preserving)")

    @property
    def feature_size(self) -> int:
        """Spatial extent after the five halvings."""
        return self.input_size // 32

    @property
    def flatten_length(self) -> int:
        return self.feature_size * self.feature_size * self.neck_channels[-1]


def class_labels(num_classes: int) -> list[str]:
    if num_classes == 2:
        return ["smoking", "not_smoking"]
    return [f"class_{i}" for i in range(num_classes)]


@dataclass
class ClassScores:
    probabilities: Tensor
    predicted_class: int
    labels: list[str]

    @property
    def label(self) -> str:
        return self.labels[self.predicted_class]

    @property
    def confidence(self) -> float:
        return float(self.probabilities[self.predicted_class])


@dataclass
class ProposedModel:
    config: ModelConfig
    convs: list[ConvParams]
    fc1: DenseParams
    fc2: DenseParams

    @property
    def backbone(self) -> list[ConvParams]:
        return self.convs[:N_BACKBONE]

    @property
    def neck(self) -> list[ConvParams]:
        return self.convs[N_BACKBONE:]

    def parameter_tensors(self) -> list[Tensor]:
        """All parameter tensors in module order (conv weights/bias pairs, then fc)."""
        out = []
        for p in self.convs:
            out.extend([p.weights, p.bias])
        out.extend([self.fc1.weights, self.fc1.bias, self.fc2.weights, self.fc2.bias])
        return out

    def parameter_count(self) -> int:
        return sum(t.size for t in self.parameter_tensors())


def _conv_layer_plan(config: ModelConfig) -> list[tuple[int, int, int]]:
    """(in_channels, out_channels, stride) for each of the seven convolutions."""
    plan = []
    c_in = config.input_channels
    for c_out in config.backbone_channels:
        plan.append((c_in, c_out, config.stride_backbone))
        c_in = c_out
    for c_out in config.neck_channels:
        plan.append((c_in, c_out, config.stride_neck))
        c_in = c_out
    return plan


def layer_output_shapes(config: ModelConfig) -> list[tuple[int, int, int]]:
    """(C, H, W) emitted by each of the seven convolutions, in order."""
    shapes = []
    size = config.input_size
    for _, c_out, stride in _conv_layer_plan(config):
        if stride == 2:
            size //= 2
        shapes.append((c_out, size, size))
    return shapes


def expected_parameter_count(config: ModelConfig) -> int:
    total = 0
    k = config.kernel
    for c_in, c_out, _ in _conv_layer_plan(config):
        total += c_out * c_in * k * k + c_out
    total += config.hidden_dim * config.flatten_length + config.hidden_dim
    total += config.num_classes * config.hidden_dim + config.num_classes
    return total


def build(config: ModelConfig, seed: int) -> ProposedModel:
    """Instantiate the model with He fan-in initialization and zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    pad = (config.kernel - 1) // 2

    def he(shape, fan_in):
        scale = np.float32(np.sqrt(2.0 / fan_in))
        return rng.standard_normal(shape, dtype=np.float32) * scale

    convs = []
    for c_in, c_out, stride in _conv_layer_plan(config):
        w = he((c_out, c_in, config.kernel, config.kernel), c_in * config.kernel ** 2)
        convs.append(ConvParams(w, np.zeros(c_out, dtype=np.float32), stride, pad))
    fc1 = DenseParams(
        he((config.hidden_dim, config.flatten_length), config.flatten_length),
        np.zeros(config.hidden_dim, dtype=np.float32),
    )
    fc2 = DenseParams(
        he((config.num_classes, config.hidden_dim), config.hidden_dim),
        np.zeros(config.num_classes, dtype=np.float32),
    )
    return ProposedModel(config, convs, fc1, fc2)


def _check_input_image(config: ModelConfig, image: Tensor) -> None:
    expected = (config.input_channels, config.input_size, config.input_size)
    if tuple(image.shape) != expected:
        raise ShapeError(f"model expects input shape {expected}, got {tuple(image.shape)}")


def forward_logits(model: ProposedModel, image: Tensor) -> Tensor:
    """Raw class logits; intermediates are released as the chain advances."""
    _check_input_image(model.config, image)
    x = image
    for p in model.convs:
        x = relu(conv2d(x, p))
    h = relu(dense(flatten(x), model.fc1))
    return dense(h, model.fc2)


def forward(model: ProposedModel, image: Tensor) -> ClassScores:
    probs = softmax(forward_logits(model, image))
    return ClassScores(probs, int(np.argmax(probs)), class_labels(model.config.num_classes))


@dataclass
class ForwardTrace:
    """Per-layer values cached for backpropagation and shape inspection."""

    conv_inputs: list[Tensor]
    conv_pre: list[Tensor]      # pre-ReLU conv outputs
    flat: Tensor
    fc1_pre: Tensor
    hidden: Tensor
    logits: Tensor

    @property
    def conv_output_shapes(self) -> list[tuple[int, ...]]:
        return [tuple(z.shape) for z in self.conv_pre]


def forward_trace(model: ProposedModel, image: Tensor) -> ForwardTrace:
    _check_input_image(model.config, image)
    x = image
    conv_inputs, conv_pre = [], []
    for p in model.convs:
        conv_inputs.append(x)
        z = conv2d(x, p)
        conv_pre.append(z)
        x = relu(z)
    flat = flatten(x)
    fc1_pre = dense(flat, model.fc1)
    hidden = relu(fc1_pre)
    logits = dense(hidden, model.fc2)
    return ForwardTrace(conv_inputs, conv_pre, flat, fc1_pre, hidden, logits)


@dataclass
class ParamGrads:
    conv: list[tuple[Tensor, Tensor]]     # (grad_weights, grad_bias) per conv
    fc1: tuple[Tensor, Tensor]
    fc2: tuple[Tensor, Tensor]


def loss_and_gradients(model: ProposedModel, image: Tensor, label: int):
    """Cross-entropy loss plus gradients for every parameter tensor."""
    trace = forward_trace(model, image)
    loss = softmax_cross_entropy(trace.logits, label)

    g = softmax_cross_entropy_grad(trace.logits, label)
    g_hidden, gw2, gb2 = dense_grad(trace.hidden, model.fc2, g)
    g_fc1_pre = relu_grad(trace.fc1_pre, g_hidden)
    g_flat, gw1, gb1 = dense_grad(trace.flat, model.fc1, g_fc1_pre)

    grad = g_flat.reshape(trace.conv_pre[-1].shape)
    conv_grads: list[tuple[Tensor, Tensor]] = [None] * len(model.convs)
    for i in range(len(model.convs) - 1, -1, -1):
        g_pre = relu_grad(trace.conv_pre[i], grad)
        grad, gw, gb = conv2d_grad(trace.conv_inputs[i], model.convs[i], g_pre)
        conv_grads[i] = (gw, gb)
    return loss, ParamGrads(conv_grads, (gw1, gb1), (gw2, gb2))


def _sgd_step(model: ProposedModel, grads: ParamGrads, lr: float) -> None:
    lr = np.float32(lr)
    for p, (gw, gb) in zip(model.convs, grads.conv):
        p.weights -= lr * gw
        p.bias -= lr * gb
    model.fc1.weights -= lr * grads.fc1[0]
    model.fc1.bias -= lr * grads.fc1[1]
    model.fc2.weights -= lr * grads.fc2[0]
    model.fc2.bias -= lr * grads.fc2[1]


@dataclass
class TrainConfig:
    epochs: int
    learning_rate: float = 0.01
    seed: int = 0
    loss: str = "cross_entropy"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        # lr = 0 is allowed as an explicit no-op run; negative rates are not.
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.loss != "cross_entropy":
            raise ValueError(f"only cross_entropy loss is supported, got {self.loss!r}")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def fit(model: ProposedModel, dataset: list[tuple[Tensor, int]],
        train_cfg: TrainConfig) -> list[EpochStats]:
    """Per-sample SGD on cross-entropy over the dataset.

    Sample order is reshuffled each epoch from the config seed, so runs are
    deterministic. Logged loss/accuracy are measured on each sample just
    before its update.
    """
    if not dataset:
        raise ValueError("fit requires a non-empty dataset")
    for image, label in dataset:
        _check_input_image(model.config, image)
        if not 0 <= label < model.config.num_classes:
            raise ValueError(
                f"label {label} out of range for {model.config.num_classes} classes"
            )

    rng = np.random.Generator(np.random.PCG64(train_cfg.seed))
    log = []
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(dataset))
        total_loss = 0.0
        for i in order:
            image, label = dataset[i]
            loss, grads = loss_and_gradients(model, image, label)
            total_loss += loss
            if train_cfg.learning_rate > 0:
                _sgd_step(model, grads, train_cfg.learning_rate)
        correct = sum(
            int(forward(model, image).predicted_class == label) for image, label in dataset
        )
        log.append(EpochStats(epoch, total_loss / len(dataset), correct / len(dataset)))
    return log


def save_weights(model: ProposedModel, path) -> None:
    """Write the binary weights file (magic, version, config words, tensors)."""
    cfg = model.config
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<I", WEIGHTS_VERSION))
        words = _config_words(cfg)
        f.write(struct.pack(f"<{len(words)}I", *words))
        for t in model.parameter_tensors():
            f.write(struct.pack("<I", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
            f.write(np.ascontiguousarray(t).astype("<f4", copy=False).tobytes())


def load_weights(path, config: ModelConfig | None = None) -> ProposedModel:
    """Read a weights file back into a model.

    When config is given, the file header must match it field for field;
    otherwise the configuration stored in the file is used.
    """
    with open(path, "rb") as f:
        data = f.read()
    reader = _Reader(data, str(path))
    magic = reader.take(4, "magic")
    if magic != WEIGHTS_MAGIC:
        raise WeightsFormatError(f"{path}: bad magic {magic!r}, expected {WEIGHTS_MAGIC!r}")
    version = reader.u32("version")
    if version != WEIGHTS_VERSION:
        raise WeightsFormatError(f"{path}: unsupported version {version}")
    file_config = _read_config(reader)
    if config is not None:
        _require_same_config(config, file_config, str(path))
    cfg = config or file_config

    pad = (cfg.kernel - 1) // 2
    tensors = []
    for name, shape in _parameter_shapes(cfg):
        rank = reader.u32(f"{name} rank")
        if rank != len(shape):
            raise WeightsFormatError(
                f"{path}: {name} has rank {rank}, expected {len(shape)}"
            )
        extents = tuple(reader.u32(f"{name} extent") for _ in range(rank))
        if extents != shape:
            raise WeightsFormatError(
                f"{path}: {name} has shape {extents}, expected {shape}"
            )
        n = int(np.prod(shape))
        payload = reader.take(4 * n, f"{name} payload")
        tensors.append(np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape))
    if reader.remaining():
        raise WeightsFormatError(
            f"{path}: {reader.remaining()} trailing bytes after last tensor"
        )

    convs = []
    strides = [s for _, _, s in _conv_layer_plan(cfg)]
    for i in range(N_BACKBONE + N_NECK):
        convs.append(ConvParams(tensors[2 * i], tensors[2 * i + 1], strides[i], pad))
    base = 2 * (N_BACKBONE + N_NECK)
    fc1 = DenseParams(tensors[base], tensors[base + 1])
    fc2 = DenseParams(tensors[base + 2], tensors[base + 3])
    return ProposedModel(cfg, convs, fc1, fc2)


def _config_words(cfg: ModelConfig) -> list[int]:
    return [
        cfg.input_size,
        cfg.input_channels,
        *cfg.backbone_channels,
        *cfg.neck_channels,
        cfg.hidden_dim,
        cfg.num_classes,
        cfg.kernel,
        cfg.stride_backbone,
        cfg.stride_neck,
    ]


def _read_config(reader: "_Reader") -> ModelConfig:
    w = [reader.u32("config") for _ in range(14)]
    try:
        return ModelConfig(
            input_size=w[0],
            input_channels=w[1],
            backbone_channels=tuple(w[2:7]),
            neck_channels=tuple(w[7:9]),
            hidden_dim=w[9],
            num_classes=w[10],
            kernel=w[11],
            stride_backbone=w[12],
            stride_neck=w[13],
        )
    except ValueError as exc:
        raise WeightsFormatError(f"{reader.source}: invalid stored config: {exc}") from exc


def _require_same_config(expected: ModelConfig, found: ModelConfig, source: str) -> None:
    for name in (
        "input_size", "input_channels", "backbone_channels", "neck_channels",
        "hidden_dim", "num_classes", "kernel", "stride_backbone", "stride_neck",
    ):
        if getattr(expected, name) != getattr(found, name):
            raise WeightsFormatError(
                f"{source}: config field {name} is {getattr(found, name)} in file "
                f"but {getattr(expected, name)} was requested"
            )


def _parameter_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    shapes = []
    k = cfg.kernel
    for i, (c_in, c_out, _) in enumerate(_conv_layer_plan(cfg)):
        shapes.append((f"conv{i} weights", (c_out, c_in, k, k)))
        shapes.append((f"conv{i} bias", (c_out,)))
    shapes.append(("fc1 weights", (cfg.hidden_dim, cfg.flatten_length)))
    shapes.append(("fc1 bias", (cfg.hidden_dim,)))
    shapes.append(("fc2 weights", (cfg.num_classes, cfg.hidden_dim)))
    shapes.append(("fc2 bias", (cfg.num_classes,)))
    return shapes


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise WeightsFormatError(
                f"{self.source}: truncated, needed {n} bytes for {what} "
                f"at offset {self.offset} but only {len(self.data) - self.offset} remain"
            )
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def remaining(self) -> int:
        return len(self.data) - self.offset
