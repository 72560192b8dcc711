"""Model architectures and binary model persistence.

Two convolutional autoencoders (RGB and disparity) compress frames to
latent vectors; a recurrent predictor maps (z_rgb, z_disp, state) to the
next state. Model files: magic "SKLMODL1", u32 schema version, u32 entry
count, then a named-parameter table of (name, shape, little-endian f32
data); integer architecture metadata rides in reserved "meta/" entries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import nn
from .dataset import NormStats, normalize_state
from .imaging import block_mean

MODEL_MAGIC = b"SKLMODL1"
MODEL_VERSION = 1


class ModelError(ValueError):
    """Unreadable or mismatched model file."""


class Autoencoder:
    """conv(s2) x3 + dense encoder; mirrored dense + upsample/conv decoder.

    Hidden activations are rectified, outputs (and the latent) are linear.
    Input resolution must be divisible by 8.
    """

    def __init__(self, channels: int, hw: int, latent: int, rng=None, dtype=np.float32):
        if hw % 8:
            raise ValueError("autoencoder input resolution must be divisible by 8")
        rng = rng or np.random.default_rng(0)
        self.channels, self.hw, self.latent = channels, hw, latent
        feat = hw // 8
        flat = feat * feat * 32
        self.encoder = nn.Sequential([
            nn.Conv2d(channels, 8, rng, stride=2, dtype=dtype), nn.ReLU(),
            nn.Conv2d(8, 16, rng, stride=2, dtype=dtype), nn.ReLU(),
            nn.Conv2d(16, 32, rng, stride=2, dtype=dtype), nn.ReLU(),
            nn.Flatten(),
            nn.Dense(flat, latent, rng, dtype=dtype),
        ])
        self.decoder = nn.Sequential([
            nn.Dense(latent, flat, rng, dtype=dtype), nn.ReLU(),
            nn.Reshape(feat, feat, 32),
            nn.Upsample2x(), nn.Conv2d(32, 16, rng, stride=1, dtype=dtype), nn.ReLU(),
            nn.Upsample2x(), nn.Conv2d(16, 8, rng, stride=1, dtype=dtype), nn.ReLU(),
            nn.Upsample2x(), nn.Conv2d(8, channels, rng, stride=1, dtype=dtype),
        ])

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.encoder.forward(x)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.decoder.forward(self.encoder.forward(x))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return self.encoder.backward(self.decoder.backward(dout))

    def named_params(self):
        return self.encoder.named_params("enc") + self.decoder.named_params("dec")

    def meta(self) -> dict:
        return {"kind": 1, "channels": self.channels, "hw": self.hw, "latent": self.latent}


class Predictor:
    """LSTM cell over (z_rgb, z_disp, state) with a linear readout to the next state."""

    def __init__(self, latent: int, d_state: int, hidden: int = 64, rng=None,
                 dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.latent, self.d_state, self.hidden = latent, d_state, hidden
        self.n_in = 2 * latent + d_state
        self.cell = nn.LSTMCell(self.n_in, hidden, rng, dtype=dtype)
        self.readout = nn.Dense(hidden, d_state, rng, dtype=dtype)

    def zero_state(self, batch: int = 1):
        return self.cell.zero_state(batch)

    def step(self, x: np.ndarray, state):
        """One recurrent step on a (batch, n_in) input; returns (y, new_state)."""
        h, c = state
        h2, c2, _ = self.cell.step(x, h, c)
        return self.readout.forward(h2), (h2, c2)

    def named_params(self):
        return self.cell.named_params("cell") + self.readout.named_params("readout")

    def meta(self) -> dict:
        return {"kind": 2, "latent": self.latent, "d_state": self.d_state,
                "hidden": self.hidden}


# ----------------------------------------------------------------------
# persistence


def _write_entry(fh, name: str, arr: np.ndarray):
    encoded = name.encode()
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_model(path, model) -> None:
    entries = [(name, p.value) for name, p in model.named_params()]
    entries += [(f"meta/{k}", np.array([float(v)], dtype=np.float32))
                for k, v in sorted(model.meta().items())]
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<I", len(entries)))
        for name, arr in entries:
            _write_entry(fh, name, arr)


def _read_entries(path) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MODEL_MAGIC:
        raise ModelError(f"{path}: not a model file (bad magic)")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != MODEL_VERSION:
        raise ModelError(f"{path}: unsupported model version {version}")
    entries = {}
    off = 16
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + name_len].decode()
        off += name_len
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        entries[name] = arr.copy()
    if off != len(blob):
        raise ModelError(f"{path}: {len(blob) - off} trailing bytes")
    return entries


def load_model(path):
    entries = _read_entries(path)
    meta = {k.split("/", 1)[1]: int(v[0]) for k, v in entries.items()
            if k.startswith("meta/")}
    kind = meta.get("kind")
    if kind == 1:
        model = Autoencoder(meta["channels"], meta["hw"], meta["latent"])
    elif kind == 2:
        model = Predictor(meta["latent"], meta["d_state"], meta["hidden"])
    else:
        raise ModelError(f"{path}: unknown model kind {kind!r}")
    for name, p in model.named_params():
        if name not in entries:
            raise ModelError(f"{path}: missing parameter {name}")
        if entries[name].shape != p.value.shape:
            raise ModelError(f"{path}: parameter {name} has shape "
                             f"{entries[name].shape}, expected {p.value.shape}")
        p.value[...] = entries[name]
    return model


# ----------------------------------------------------------------------
# inference-time bundle


def standardize_rgb(rgb: np.ndarray, stats: NormStats, downscale: int) -> np.ndarray:
    """uint8 (H, W, 3) image to standardized float32 at learner resolution."""
    img = block_mean(rgb, downscale) / 255.0
    return ((img - stats.image_mean) / stats.image_std).astype(np.float32)


def standardize_disparity(disp: np.ndarray, stats: NormStats, downscale: int) -> np.ndarray:
    img = block_mean(disp, downscale)
    return (((img - stats.disp_mean) / stats.disp_std)[..., None]).astype(np.float32)


@dataclass
class PolicyBundle:
    """Everything needed to run the policy closed loop."""

    enc_rgb: Autoencoder
    enc_disp: Autoencoder
    predictor: Predictor
    stats: NormStats
    downscale: int

    @property
    def d_state(self) -> int:
        return self.predictor.d_state

    @property
    def variant(self) -> str:
        return "long" if self.d_state == 7 else "short"

    def encode_frame(self, frame) -> np.ndarray:
        z_rgb = self.enc_rgb.encode(
            standardize_rgb(frame.rgb, self.stats, self.downscale)[None, ...]
        )
        z_disp = self.enc_disp.encode(
            standardize_disparity(frame.disparity, self.stats, self.downscale)[None, ...]
        )
        return np.concatenate([z_rgb[0], z_disp[0]])


def predict_next(bundle: PolicyBundle, frame, state_norm: np.ndarray, hidden):
    """One policy step: encode the frame, run the cell, return (next_state_norm, hidden').

    Pure given (bundle, frame, state_norm, hidden); hidden is the
    (h, c) pair from the previous call or predictor.zero_state(1).
    """
    z = bundle.encode_frame(frame)
    x = np.concatenate([z, np.asarray(state_norm, dtype=np.float32)])[None, :]
    y, hidden2 = bundle.predictor.step(x.astype(np.float32), hidden)
    return y[0], hidden2


def normalized_state_input(joints: np.ndarray, cmd, stats: NormStats) -> np.ndarray:
    if cmd is None:
        return normalize_state(np.asarray(joints, dtype=float), stats)
    full = np.concatenate([np.asarray(joints, dtype=float), np.asarray(cmd, dtype=float)])
    return normalize_state(full, stats)
