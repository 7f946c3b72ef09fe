"""Binary containers for features and models.

Feature container (PHFE): magic ``PHFE``, u16 version, u16 kind length +
ASCII kind tag, u32 rows, u32 cols, f64 frame shift in seconds, then
row-major little-endian f64 data.

Model container (PHNN): magic ``PHNN``, u16 version, u32 layer sizes
(p, q, r), length-prefixed activation tags, i64 init seed, then a training
config echo (flagged optional) and the parameter blocks W1, b1, W2, b2 as
little-endian f64.  Everything needed to reproduce a training run rides in
the file.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ContainerFormatError
from .excitation import Contour
from .neural import MlpModel, TrainConfig
from .spectral import FeatureMatrix

PHFE_MAGIC = b"PHFE"
PHNN_MAGIC = b"PHNN"
PHFE_VERSION = 1
PHNN_VERSION = 1

CONTOUR_KIND_TAGS = {"pitch": "PC", "epoch_strength": "ESC"}
TAG_CONTOUR_KINDS = {v: k for k, v in CONTOUR_KIND_TAGS.items()}


def _write_str(parts: list[bytes], text: str) -> None:
    raw = text.encode("ascii")
    parts.append(struct.pack("<H", len(raw)))
    parts.append(raw)


class _Reader:
    def __init__(self, data: bytes, label: str):
        self.data = data
        self.pos = 0
        self.label = label

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerFormatError(f"{self.label}: truncated container")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def read_str(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("ascii")

    def read_f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").copy()


def feature_to_bytes(kind: str, data: np.ndarray, frame_shift_s: float) -> bytes:
    data = np.ascontiguousarray(np.atleast_2d(np.asarray(data, dtype=np.float64)))
    parts: list[bytes] = [PHFE_MAGIC, struct.pack("<H", PHFE_VERSION)]
    _write_str(parts, kind)
    parts.append(struct.pack("<IId", data.shape[0], data.shape[1], frame_shift_s))
    parts.append(data.astype("<f8").tobytes())
    return b"".join(parts)


def save_features(path, fm: FeatureMatrix) -> None:
    with open(path, "wb") as fh:
        fh.write(feature_to_bytes(fm.kind, fm.data, fm.frame_shift_s))


def save_contour(path, c: Contour) -> None:
    with open(path, "wb") as fh:
        fh.write(feature_to_bytes(CONTOUR_KIND_TAGS[c.kind], c.values[None, :], 0.01))


def _read_feature_blob(blob: bytes, label: str):
    r = _Reader(blob, label)
    if r.take(4) != PHFE_MAGIC:
        raise ContainerFormatError(f"{label}: bad magic, not a PHFE container")
    (version,) = r.unpack("<H")
    if version != PHFE_VERSION:
        raise ContainerFormatError(f"{label}: unsupported PHFE version {version}")
    kind = r.read_str()
    rows, cols, shift = r.unpack("<IId")
    data = r.read_f64(rows * cols).reshape(rows, cols)
    return kind, data, shift


def load_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        kind, data, shift = _read_feature_blob(fh.read(), str(path))
    return FeatureMatrix(data, kind, shift)


def load_contour(path) -> Contour:
    with open(path, "rb") as fh:
        kind, data, _ = _read_feature_blob(fh.read(), str(path))
    if kind not in TAG_CONTOUR_KINDS:
        raise ContainerFormatError(f"{path}: kind {kind!r} is not a contour tag")
    return Contour(data[0], TAG_CONTOUR_KINDS[kind])


def save_model(path, m: MlpModel) -> None:
    p, q, r = m.layer_sizes
    parts: list[bytes] = [PHNN_MAGIC, struct.pack("<H", PHNN_VERSION)]
    parts.append(struct.pack("<III", p, q, r))
    _write_str(parts, m.hidden_activation)
    _write_str(parts, m.output_activation)
    parts.append(struct.pack("<q", m.rng_seed))
    cfg = m.train_config
    parts.append(struct.pack("<B", 1 if cfg is not None else 0))
    if cfg is not None:
        parts.append(struct.pack("<dI", cfg.learning_rate, cfg.epochs))
        _write_str(parts, cfg.loss)
        parts.append(struct.pack("<q", cfg.shuffle_seed))
    for arr in (m.W1, m.b1, m.W2, m.b2):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), str(path))
    if r.take(4) != PHNN_MAGIC:
        raise ContainerFormatError(f"{path}: bad magic, not a PHNN container")
    (version,) = r.unpack("<H")
    if version != PHNN_VERSION:
        raise ContainerFormatError(f"{path}: unsupported PHNN version {version}")
    p, q, rr = r.unpack("<III")
    hidden_act = r.read_str()
    output_act = r.read_str()
    (seed,) = r.unpack("<q")
    (has_cfg,) = r.unpack("<B")
    cfg = None
    if has_cfg:
        lr, epochs = r.unpack("<dI")
        loss = r.read_str()
        (shuffle_seed,) = r.unpack("<q")
        cfg = TrainConfig(learning_rate=lr, epochs=epochs, loss=loss,
                          shuffle_seed=shuffle_seed)
    W1 = r.read_f64(q * p).reshape(q, p)
    b1 = r.read_f64(q)
    W2 = r.read_f64(rr * q).reshape(rr, q)
    b2 = r.read_f64(rr)
    return MlpModel(layer_sizes=(p, q, rr), W1=W1, b1=b1, W2=W2, b2=b2,
                    hidden_activation=hidden_act, output_activation=output_act,
                    rng_seed=seed, train_config=cfg)
