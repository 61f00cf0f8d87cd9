"""Weight containers, manifests, synthetic models and hardware cost tables.

The container is the safetensors byte layout::

    [u64 little-endian header length N][N bytes UTF-8 JSON header][raw data]

where the header maps each tensor name to ``{"dtype", "shape",
"data_offsets": [begin, end]}`` with offsets relative to the start of the
data section. Only ``F32`` and ``F64`` tensors are supported.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from spectral_frg.errors import (
    ConfigurationError,
    ContainerParseError,
    EmptyInputError,
    IntegrityError,
    OperatorLookupError,
    ShapeError,
    UnsupportedDtypeError,
)
from spectral_frg.spectral_core import ACTIVATIONS

TensorStore = dict[str, np.ndarray]

_DTYPES = {"F32": np.dtype("<f4"), "F64": np.dtype("<f8")}
_DTYPE_NAMES = {np.dtype("float32"): "F32", np.dtype("float64"): "F64"}

KINDS = ("conv2d", "linear", "attention_head")
MODALITIES = ("vision", "text", "audio", "none")
HW_OPS = ("conv", "matmul", "elementwise")


# ---------------------------------------------------------------------------
# container


def read_container(path) -> TensorStore:
    """Parse a safetensors file into ``{name: array}``.

    Raises:
        ContainerParseError: truncated length prefix or malformed header.
        IntegrityError: byte ranges out of bounds, overlapping, or not
            matching the declared shape and dtype.
        UnsupportedDtypeError: any dtype other than F32/F64.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ContainerParseError("file shorter than the 8-byte header length", 0)
    (n,) = struct.unpack("<Q", raw[:8])
    if 8 + n > len(raw):
        raise IntegrityError(
            f"{path}: header length {n} exceeds file size {len(raw)}"
        )
    try:
        header = json.loads(raw[8 : 8 + n].decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ContainerParseError(f"header is not UTF-8: {exc.reason}", 8 + exc.start) from None
    except json.JSONDecodeError as exc:
        raise ContainerParseError(f"malformed header: {exc.msg}", 8 + exc.pos) from None
    if not isinstance(header, dict):
        raise ContainerParseError("header must be a JSON object", 8)

    data = memoryview(raw)[8 + n :]
    spans = []
    store: TensorStore = {}
    for name, info in header.items():
        if name == "__metadata__":
            continue
        try:
            dtype_name = info["dtype"]
            shape = [int(d) for d in info["shape"]]
            begin, end = (int(o) for o in info["data_offsets"])
        except (KeyError, TypeError, ValueError):
            raise ContainerParseError(f"bad header entry for tensor {name!r}", 8) from None
        if dtype_name not in _DTYPES:
            raise UnsupportedDtypeError(dtype_name)
        dtype = _DTYPES[dtype_name]
        if any(d < 0 for d in shape):
            raise IntegrityError(f"tensor {name!r} has negative dimension {shape}")
        if not 0 <= begin <= end <= len(data):
            raise IntegrityError(
                f"tensor {name!r} range [{begin}, {end}) outside data section "
                f"of {len(data)} bytes"
            )
        expected = math.prod(shape) * dtype.itemsize
        if end - begin != expected:
            raise IntegrityError(
                f"tensor {name!r} declares shape {shape} ({expected} bytes) "
                f"but byte range has {end - begin}"
            )
        spans.append((begin, end, name))
        store[name] = np.frombuffer(data[begin:end], dtype=dtype).reshape(shape).copy()

    spans.sort()
    for (b0, e0, n0), (b1, e1, n1) in zip(spans, spans[1:]):
        if b1 < e0:
            raise IntegrityError(f"tensors {n0!r} and {n1!r} have overlapping byte ranges")
    return store


def container_bytes(store: Mapping[str, np.ndarray]) -> bytes:
    if not store:
        raise EmptyInputError("cannot write an empty tensor store")
    header = {}
    chunks = []
    offset = 0
    for name in sorted(store):
        arr = np.asarray(store[name])
        if arr.dtype not in _DTYPE_NAMES:
            raise UnsupportedDtypeError(str(arr.dtype))
        blob = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
        header[name] = {
            "dtype": _DTYPE_NAMES[arr.dtype],
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(blob)],
        }
        chunks.append(blob)
        offset += len(blob)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<Q", len(head)) + head + b"".join(chunks)


def write_container(store: Mapping[str, np.ndarray], path) -> None:
    """Write ``store`` deterministically: names sorted, compact sorted header."""
    payload = container_bytes(store)
    Path(path).write_bytes(payload)


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class OperatorDescriptor:
    name: str
    kind: str
    weight_key: str
    bias_key: str | None = None
    modality: str = "none"
    hw_op: str = "matmul"
    activation: str = "identity"
    stage: str = "main"

    def __post_init__(self):
        for attr, allowed in (
            ("kind", KINDS),
            ("modality", MODALITIES),
            ("hw_op", HW_OPS),
            ("activation", tuple(ACTIVATIONS)),
        ):
            if getattr(self, attr) not in allowed:
                raise ConfigurationError(
                    f"operator {self.name!r}: {attr} {getattr(self, attr)!r} "
                    f"not in {list(allowed)}"
                )

    @classmethod
    def from_dict(cls, d: Mapping) -> "OperatorDescriptor":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(f"bad operator descriptor {dict(d)}: {exc}") from None


@dataclass
class Model:
    """A manifest (ordered operators) together with its tensor store."""

    name: str
    operators: list[OperatorDescriptor]
    store: TensorStore = field(repr=False)

    def __post_init__(self):
        validate_manifest(self.operators, self.store)

    @property
    def names(self) -> list[str]:
        return [op.name for op in self.operators]

    def operator(self, name: str) -> OperatorDescriptor:
        for op in self.operators:
            if op.name == name:
                return op
        raise OperatorLookupError(
            f"unknown operator {name!r}; available: {', '.join(self.names)}"
        )

    def index(self, name: str) -> int:
        self.operator(name)
        return self.names.index(name)

    def param_count(self, name: str) -> int:
        op = self.operator(name)
        n = self.store[op.weight_key].size
        if op.bias_key is not None:
            n += self.store[op.bias_key].size
        return int(n)

    def manifest_dict(self) -> dict:
        return {
            "model_name": self.name,
            "operators": [asdict(op) for op in self.operators],
        }


def validate_manifest(operators, store: Mapping[str, np.ndarray]) -> None:
    """Check every key resolves and shapes fit their kind; warn on orphans."""
    seen = set()
    used = set()
    for op in operators:
        if op.name in seen:
            raise ConfigurationError(f"duplicate operator name {op.name!r}")
        seen.add(op.name)
        for key in (op.weight_key, op.bias_key):
            if key is None:
                continue
            if key not in store:
                raise OperatorLookupError(
                    f"operator {op.name!r} references missing tensor {key!r}"
                )
            used.add(key)
        w = store[op.weight_key]
        want = 4 if op.kind == "conv2d" else 2
        if w.ndim != want:
            raise ShapeError(
                f"operator {op.name!r} of kind {op.kind} needs a {want}-axis "
                f"weight, got shape {w.shape}"
            )
        if op.bias_key is not None and store[op.bias_key].shape != (w.shape[0],):
            raise ShapeError(
                f"operator {op.name!r}: bias shape {store[op.bias_key].shape} "
                f"does not match weight shape {w.shape}"
            )
    orphans = sorted(set(store) - used)
    if orphans:
        warnings.warn(f"tensors not referenced by the manifest: {orphans}", stacklevel=3)


def read_manifest(path) -> tuple[str, list[OperatorDescriptor]]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ContainerParseError(f"{path}: malformed manifest: {exc.msg}", exc.pos) from None
    try:
        ops = [OperatorDescriptor.from_dict(d) for d in doc["operators"]]
        return doc["model_name"], ops
    except (KeyError, TypeError):
        raise ConfigurationError(
            f"{path}: manifest needs 'model_name' and 'operators' fields"
        ) from None


def write_manifest(model: Model, path) -> None:
    Path(path).write_text(json.dumps(model.manifest_dict(), indent=2, sort_keys=True) + "\n")


def load_model(container_path, manifest_path) -> Model:
    name, ops = read_manifest(manifest_path)
    if not ops:
        raise EmptyInputError(f"{manifest_path}: manifest lists no operators")
    return Model(name, ops, read_container(container_path))


def save_model(model: Model, container_path, manifest_path) -> None:
    write_container(model.store, container_path)
    write_manifest(model, manifest_path)


def reshape_for_augment(op: OperatorDescriptor, tensors: Mapping[str, np.ndarray]):
    """Weight matrix and bias vector of ``op`` in float64.

    Conv kernels ``(C_out, C_in, kH, kW)`` become ``C_out x (C_in*kH*kW)``
    with row-major flattening of the trailing axes. Missing bias is zeros.
    """
    try:
        w = np.asarray(tensors[op.weight_key], dtype=np.float64)
    except KeyError:
        raise OperatorLookupError(f"missing weight tensor {op.weight_key!r}") from None
    if op.kind == "conv2d":
        if w.ndim != 4:
            raise ShapeError(f"{op.name}: conv2d weight must be 4-axis, got {w.shape}")
        w = w.reshape(w.shape[0], -1)
    elif w.ndim != 2:
        raise ShapeError(f"{op.name}: {op.kind} weight must be 2-axis, got {w.shape}")
    if op.bias_key is None:
        b = np.zeros(w.shape[0])
    else:
        try:
            b = np.asarray(tensors[op.bias_key], dtype=np.float64)
        except KeyError:
            raise OperatorLookupError(f"missing bias tensor {op.bias_key!r}") from None
        if b.shape != (w.shape[0],):
            raise ShapeError(f"{op.name}: bias shape {b.shape} vs weight {w.shape}")
    return w, b


# ---------------------------------------------------------------------------
# synthetic models

# (name, stage, C_out, C_in, k) for the main ResNet-18 convolutions.
_RESNET18_CONVS = [("conv1", "stem", 64, 3, 7)]
for _stage, _cout, _cin in (("layer1", 64, 64), ("layer2", 128, 64),
                            ("layer3", 256, 128), ("layer4", 512, 256)):
    for _block in range(2):
        for _conv in range(2):
            _in = _cin if (_block == 0 and _conv == 0) else _cout
            _RESNET18_CONVS.append(
                (f"{_stage}.{_block}.conv{_conv + 1}", _stage, _cout, _in, 3)
            )


def _op_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def _resnet18_like(seed: int) -> Model:
    store: TensorStore = {}
    ops = []
    for i, (name, stage, cout, cin, k) in enumerate(_RESNET18_CONVS):
        rng = _op_rng(seed, i)
        std = math.sqrt(2.0 / (cin * k * k))
        store[f"{name}.weight"] = (rng.standard_normal((cout, cin, k, k)) * std).astype(np.float32)
        ops.append(OperatorDescriptor(name, "conv2d", f"{name}.weight", None, "vision",
                                      "conv", "relu", stage))
    rng = _op_rng(seed, len(ops))
    store["fc.weight"] = (rng.standard_normal((1000, 512)) / math.sqrt(512)).astype(np.float32)
    store["fc.bias"] = (rng.standard_normal(1000) * 0.01).astype(np.float32)
    ops.append(OperatorDescriptor("fc", "linear", "fc.weight", "fc.bias", "vision",
                                  "matmul", "identity", "head"))
    return Model("resnet18_like", ops, store)


# Duplicate probe: layer k has k equal singular values (rank k, Frobenius
# norm 4). Flat rank-k states satisfy cos = sqrt(k1/k2), so the closest
# distinct pair (15 vs 16) is still about 0.25 rad apart.
_PROBE_DIM = 16
_PROBE_RANKS = tuple(range(1, _PROBE_DIM + 1))
DUPLICATE_SOURCE = "probe.2"
DUPLICATE_COPY = "probe.2.copy"


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _duplicate_probe(seed: int) -> Model:
    store: TensorStore = {}
    ops = []
    for i, rank in enumerate(_PROBE_RANKS):
        rng = _op_rng(seed, i)
        s = np.zeros(_PROBE_DIM)
        s[:rank] = 4.0 / np.sqrt(rank)
        w = (_orthogonal(rng, _PROBE_DIM) * s) @ _orthogonal(rng, _PROBE_DIM).T
        name = f"probe.{i}"
        store[f"{name}.weight"] = w
        store[f"{name}.bias"] = rng.standard_normal(_PROBE_DIM) * 0.05
        ops.append(OperatorDescriptor(name, "linear", f"{name}.weight", f"{name}.bias",
                                      "none", "matmul", "relu", "body"))
        if name == DUPLICATE_SOURCE:
            store[f"{DUPLICATE_COPY}.weight"] = store[f"{name}.weight"].copy()
            store[f"{DUPLICATE_COPY}.bias"] = store[f"{name}.bias"].copy()
    # the copy sits at the end of the manifest
    ops.append(OperatorDescriptor(DUPLICATE_COPY, "linear", f"{DUPLICATE_COPY}.weight",
                                  f"{DUPLICATE_COPY}.bias", "none", "matmul", "relu", "body"))
    return Model("duplicate_probe", ops, store)


def _custom(spec: Mapping, seed: int) -> Model:
    """Gaussian model from ``{"name": ..., "layers": [{"name", "kind", "shape", ...}]}``."""
    store: TensorStore = {}
    ops = []
    for i, layer in enumerate(spec["layers"]):
        rng = _op_rng(seed, i)
        shape = tuple(layer["shape"])
        name = layer["name"]
        fan_in = math.prod(shape[1:])
        store[f"{name}.weight"] = rng.standard_normal(shape) / math.sqrt(fan_in)
        bias_key = None
        if layer.get("bias", False):
            bias_key = f"{name}.bias"
            store[bias_key] = rng.standard_normal(shape[0]) * 0.01
        kind = layer.get("kind", "conv2d" if len(shape) == 4 else "linear")
        ops.append(OperatorDescriptor(
            name, kind, f"{name}.weight", bias_key, layer.get("modality", "none"),
            layer.get("hw_op", "conv" if kind == "conv2d" else "matmul"),
            layer.get("activation", "relu"), layer.get("stage", "main")))
    return Model(spec.get("name", "custom"), ops, store)


def generate_synthetic(profile, seed: int = 0) -> Model:
    """Seeded synthetic model.

    ``profile`` is ``"resnet18_like"``, ``"duplicate_probe"``, or a mapping
    describing custom layers. Output bytes depend only on ``(profile, seed)``.
    """
    if isinstance(profile, Mapping):
        return _custom(profile, seed)
    if profile == "resnet18_like":
        return _resnet18_like(seed)
    if profile == "duplicate_probe":
        return _duplicate_probe(seed)
    raise ConfigurationError(
        f"unknown synthetic profile {profile!r}; expected resnet18_like, "
        "duplicate_probe, or a custom layer mapping"
    )


def drop_operators(model: Model, names) -> Model:
    names = set(names)
    kept = [op for op in model.operators if op.name not in names]
    keys = {k for op in kept for k in (op.weight_key, op.bias_key) if k is not None}
    return Model(model.name, kept, {k: v for k, v in model.store.items() if k in keys})


# ---------------------------------------------------------------------------
# cost tables


@dataclass(frozen=True)
class CostTable:
    target: str
    costs: Mapping[str, float]

    def __post_init__(self):
        for op, c in self.costs.items():
            if not (isinstance(c, (int, float)) and math.isfinite(c) and c > 0):
                raise ConfigurationError(
                    f"cost table {self.target!r}: cost for {op!r} must be positive, got {c!r}"
                )

    def check_covers(self, operators) -> None:
        missing = sorted({op.hw_op for op in operators} - set(self.costs))
        if missing:
            raise ConfigurationError(
                f"cost table {self.target!r} has no entry for hw_op {missing}"
            )

    @classmethod
    def from_dict(cls, d: Mapping) -> "CostTable":
        try:
            return cls(str(d["target"]), {str(k): v for k, v in d["costs"].items()})
        except (KeyError, AttributeError):
            raise ConfigurationError("cost table needs 'target' and 'costs' fields") from None


BUNDLED_COST_TABLES = ("ascend", "mlu")


def read_cost_table(path) -> CostTable:
    """Load a cost table file, or a bundled one by name (``ascend``, ``mlu``)."""
    if str(path) in BUNDLED_COST_TABLES and not Path(path).exists():
        text = resources.files("spectral_frg.data").joinpath(f"{path}.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContainerParseError(f"{path}: malformed cost table: {exc.msg}", exc.pos) from None
    return CostTable.from_dict(doc)


__all__ = [
    "BUNDLED_COST_TABLES",
    "CostTable",
    "DUPLICATE_COPY",
    "DUPLICATE_SOURCE",
    "Model",
    "OperatorDescriptor",
    "TensorStore",
    "container_bytes",
    "drop_operators",
    "generate_synthetic",
    "load_model",
    "read_container",
    "read_cost_table",
    "read_manifest",
    "reshape_for_augment",
    "save_model",
    "validate_manifest",
    "write_container",
    "write_manifest",
]
