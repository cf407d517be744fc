"""
Model container: versioned binary file with a trailing SHA-256 and a YAML sidecar

Layout (all integers little-endian):

    b"DNNT"  u16 version  u8 kind (0 full, 1 sliced)
    u32 n    n bytes of UTF-8 JSON header (sorted keys)
    u32 tensor count
    per tensor: u16 name length, name, u8 dtype code (1 <f4, 2 <f8), u8 ndim, ndim x u32, payload
    32-byte SHA-256 of everything above
"""

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import yaml

from ..core.config import ArchDescriptor
from ..core.errors import (
    ChecksumError,
    ConfigError,
    FormatError,
    ShapeError,
    TruncatedContainerError,
    VersionMismatchError,
)
from ..model.groups import GroupSpec
from ..model.nested import NestedModel, build_model
from ..model.plan import NetworkPlan
from ..utils.logging import get_logger
from .sliced import SlicedModel, SliceId

logger = get_logger(__name__)

MAGIC = b"DNNT"
FORMAT_VERSION = 1
KIND_FULL = 0
KIND_SLICED = 1
DIGEST_SIZE = 32
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
CODE_OF_DTYPE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}

Storable = Union[NestedModel, SlicedModel]


@dataclass
class ContainerInfo:
    """Everything in a container except the tensor payloads' meaning"""
    kind: int
    descriptor: ArchDescriptor
    group_spec: GroupSpec
    slice_id: Optional[SliceId] = None
    frozen: bool = True
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    digest: str = ""

    @property
    def kind_name(self) -> str:
        return "sliced" if self.kind == KIND_SLICED else "full"


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".yaml")


def _header(obj: Storable) -> Tuple[int, Dict[str, Any]]:
    if isinstance(obj, NestedModel):
        return KIND_FULL, {
            'arch': obj.descriptor.to_dict(),
            'group_spec': obj.group_spec.to_dict(),
            'frozen': obj.frozen,
        }
    if isinstance(obj, SlicedModel):
        return KIND_SLICED, {
            'arch': obj.descriptor.to_dict(),
            'group_spec': obj.plan.group_spec.to_dict(),
            'slice': {'d': obj.slice_id.d, 'w': obj.slice_id.w},
            'frozen': True,
        }
    raise ConfigError(f"Cannot store object of type {type(obj).__name__}")


def _tensors(obj: Storable) -> "OrderedDict[str, np.ndarray]":
    if isinstance(obj, NestedModel):
        return obj.state_dict()
    return obj.tensors()


def to_bytes(obj: Storable) -> bytes:
    """Container bytes; identical objects always give identical bytes"""
    kind, header = _header(obj)
    tensors = _tensors(obj)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    parts = [MAGIC, struct.pack("<HB", FORMAT_VERSION, kind),
             struct.pack("<I", len(header_bytes)), header_bytes, struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        value = np.asarray(value)
        code = CODE_OF_DTYPE.get(value.dtype.newbyteorder("="))
        if code is None:
            raise ConfigError(f"Tensor {name} has unsupported dtype {value.dtype}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", code, value.ndim))
        parts.append(struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(np.ascontiguousarray(value, dtype=DTYPE_CODES[code]).tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save(obj: Storable, path: Union[str, Path]) -> Path:
    """Write the container and its ``<file>.yaml`` sidecar"""
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    data = to_bytes(obj)
    path.write_bytes(data)

    kind, header = _header(obj)
    sidecar = {
        'format_version': FORMAT_VERSION,
        'kind': "sliced" if kind == KIND_SLICED else "full",
        'sha256': data[-DIGEST_SIZE:].hex(),
        'tensors': len(_tensors(obj)),
        **header,
    }
    with open(sidecar_path(path), "w") as f:
        yaml.dump(sidecar, f, default_flow_style=False, indent=2, sort_keys=True)
    logger.info("Saved %s model to %s (%d bytes)", sidecar['kind'], path, len(data))
    return path


class _Reader:
    def __init__(self, data: bytes, limit: int):
        self.data = data
        self.limit = limit
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > self.limit:
            raise TruncatedContainerError(end + DIGEST_SIZE, len(self.data))
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def parse(data: bytes) -> ContainerInfo:
    """
    Decode container bytes. Nothing is returned unless the whole file is
    structurally complete and its checksum matches.
    """
    if len(data) < len(MAGIC):
        if MAGIC.startswith(data):
            raise TruncatedContainerError(len(MAGIC), len(data))
        raise FormatError("Not a model container (bad magic)")
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError("Not a model container (bad magic)")

    reader = _Reader(data, len(data))
    reader.take(len(MAGIC))
    version, = reader.unpack("<H")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(version, FORMAT_VERSION)
    kind, = reader.unpack("<B")
    if kind not in (KIND_FULL, KIND_SLICED):
        raise FormatError(f"Unknown container kind {kind}")

    header_size, = reader.unpack("<I")
    header_bytes = reader.take(header_size)
    count, = reader.unpack("<I")
    raw_tensors = []
    for _ in range(count):
        name_size, = reader.unpack("<H")
        name = reader.take(name_size)
        code, ndim = reader.unpack("<BB")
        if code not in DTYPE_CODES:
            raise FormatError(f"Unknown dtype code {code}")
        shape = reader.unpack(f"<{ndim}I")
        dtype = DTYPE_CODES[code]
        payload = reader.take(int(np.prod(shape, dtype=np.int64)) * dtype.itemsize)
        raw_tensors.append((name, dtype, shape, payload))

    body_end = reader.offset
    if len(data) < body_end + DIGEST_SIZE:
        raise TruncatedContainerError(body_end + DIGEST_SIZE, len(data))
    if len(data) > body_end + DIGEST_SIZE:
        raise FormatError(f"{len(data) - body_end - DIGEST_SIZE} unexpected bytes after the checksum")
    stored = data[body_end:]
    if hashlib.sha256(data[:body_end]).digest() != stored:
        raise ChecksumError("Container checksum does not match its contents")

    try:
        header = json.loads(header_bytes.decode("utf-8"))
        descriptor = ArchDescriptor.from_dict(header['arch'])
        group_spec = GroupSpec.from_dict(header['group_spec'])
        slice_id = SliceId(**header['slice']) if kind == KIND_SLICED else None
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise FormatError(f"Malformed container header: {e}")

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, dtype, shape, payload in raw_tensors:
        array = np.frombuffer(payload, dtype=dtype).reshape(shape)
        tensors[name.decode("utf-8")] = array.astype(dtype.newbyteorder("="))
    return ContainerInfo(kind, descriptor, group_spec, slice_id, bool(header.get('frozen', True)),
                         tensors, stored.hex())


def inspect(path: Union[str, Path]) -> ContainerInfo:
    path = Path(path).expanduser()
    if not path.is_file():
        raise FormatError(f"Model file not found: {path}")
    return parse(path.read_bytes())


def load(path: Union[str, Path]) -> Storable:
    """Rebuild the stored NestedModel or SlicedModel"""
    info = inspect(path)
    if info.kind == KIND_SLICED:
        model: Storable = SlicedModel(NetworkPlan.build(info.descriptor, info.group_spec),
                                      info.slice_id, info.tensors)
    else:
        model = build_model(info.descriptor, info.group_spec)
        unexpected = sorted(set(info.tensors) - set(model.state_dict()))
        if unexpected:
            raise ShapeError(f"Container has tensors the model does not: {', '.join(unexpected[:5])}")
        model.load_state_dict(info.tensors)
        model.frozen = info.frozen
    logger.info("Loaded %s model from %s", info.kind_name, path)
    return model


def load_nested(path: Union[str, Path]) -> NestedModel:
    model = load(path)
    if not isinstance(model, NestedModel):
        raise ConfigError(f"{path} holds a sliced model; this command needs a full model")
    return model
