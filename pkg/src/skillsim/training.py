"""Training loops for the two-stage learner and finite-difference gradient checks.

Stage one trains the RGB and disparity autoencoders on frames collected in
the simulator; stage two freezes the encoders and trains the recurrent
predictor on one-step state transitions with truncated backpropagation
through time. Both stages are bit-deterministic given their seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from . import nn
from .dataset import NormStats, normalize_state
from .models import Autoencoder, Predictor, standardize_disparity, standardize_rgb

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 1000            # predictor epochs
    ae_epochs: int = 120
    batch: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 5.0
    tbptt: int = 32
    seed: int = 0
    downscale: int = 2
    latent: int = 32
    hidden: int = 64
    frame_stride: int = 1

    def validate(self):
        for name in ("epochs", "ae_epochs", "batch", "lr", "grad_clip", "tbptt",
                     "downscale", "latent", "hidden", "frame_stride"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def write_loss_csv(path, losses) -> None:
    lines = ["epoch,loss"]
    lines += [f"{i},{float(loss)!r}" for i, loss in enumerate(losses)]
    FsPath(path).write_text("\n".join(lines) + "\n")


def collect_frames(episodes, modality: str, stats: NormStats, config: TrainConfig) -> np.ndarray:
    """Standardized learner-resolution frames from every step (configurable stride)."""
    frames = []
    for ep in episodes:
        for step in ep.steps[::config.frame_stride]:
            if modality == "rgb":
                frames.append(standardize_rgb(step.rgb, stats, config.downscale))
            elif modality == "disparity":
                frames.append(standardize_disparity(step.disparity, stats, config.downscale))
            else:
                raise ValueError(f"unknown modality {modality!r}")
    if not frames:
        raise ValueError("no frames to train on")
    return np.stack(frames)


def train_autoencoder(episodes, modality: str, stats: NormStats, config: TrainConfig):
    """Reconstruction training; returns (autoencoder, per-epoch mean losses)."""
    config.validate()
    frames = collect_frames(episodes, modality, stats, config)
    if frames.shape[0] < 100:
        raise ValueError(f"need at least 100 frames, got {frames.shape[0]}")
    rng = np.random.default_rng([config.seed, 1 if modality == "rgb" else 2])
    ae = Autoencoder(frames.shape[-1], frames.shape[1], config.latent, rng)
    params = ae.named_params()
    opt = nn.Adam([p for _, p in params], config.lr, config.beta1, config.beta2, config.eps)

    losses = []
    n = frames.shape[0]
    for epoch in range(config.ae_epochs):
        perm = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch):
            batch = frames[perm[lo:lo + config.batch]]
            opt.zero_grad()
            recon = ae.forward(batch)
            loss, dout = nn.loss_mse(recon, batch)
            if not np.isfinite(loss):
                raise nn.TrainingDiverged(
                    f"non-finite {modality} reconstruction loss at epoch {epoch}")
            ae.backward(dout.astype(batch.dtype))
            nn.clip_grad_norm([p for _, p in params], config.grad_clip)
            opt.step()
            total += loss * batch.shape[0]
        nn.check_finite(params, f"{modality} autoencoder epoch {epoch}")
        losses.append(total / n)
    return ae, losses


# ----------------------------------------------------------------------
# predictor training


def _episode_sequences(episodes, enc_rgb: Autoencoder, enc_disp: Autoencoder,
                       stats: NormStats, config: TrainConfig):
    """Per-episode (inputs, targets) arrays for one-step prediction."""
    include_cmd = all(e.variant == "long" for e in episodes)
    seqs = []
    for ep in episodes:
        if len(ep) < 2:
            log.warning("skipping episode with %d step(s)", len(ep))
            continue
        rgb = np.stack([standardize_rgb(s.rgb, stats, config.downscale) for s in ep.steps])
        disp = np.stack([standardize_disparity(s.disparity, stats, config.downscale)
                         for s in ep.steps])
        z = np.concatenate([enc_rgb.encode(rgb), enc_disp.encode(disp)], axis=1)
        state = ep.state_matrix.astype(float)
        if include_cmd:
            state = np.concatenate([state, ep.cmd_matrix.astype(float)], axis=1)
        state_n = normalize_state(state, stats).astype(np.float32)
        x = np.concatenate([z[:-1], state_n[:-1]], axis=1)
        seqs.append((x.astype(np.float32), state_n[1:]))
    if not seqs:
        raise ValueError("need at least one episode with two or more steps")
    return seqs, include_cmd


def _pad_batch(seqs):
    lengths = [x.shape[0] for x, _ in seqs]
    lmax = max(lengths)
    b = len(seqs)
    din = seqs[0][0].shape[1]
    d = seqs[0][1].shape[1]
    X = np.zeros((b, lmax, din), dtype=np.float32)
    Y = np.zeros((b, lmax, d), dtype=np.float32)
    M = np.zeros((b, lmax), dtype=np.float32)
    for i, (x, y) in enumerate(seqs):
        X[i, :x.shape[0]] = x
        Y[i, :y.shape[0]] = y
        M[i, :x.shape[0]] = 1.0
    return X, Y, M


def predictor_window_pass(predictor: Predictor, X, Y, M, h, c, compute_grads=True):
    """Forward (and optionally backward) over one TBPTT window.

    Returns (sum of squared masked errors, count of masked elements,
    final hidden state). Gradients accumulate into the predictor params.
    """
    b, t, _ = X.shape
    caches = []
    hs = np.empty((b, t, predictor.hidden), dtype=h.dtype)
    for step in range(t):
        h, c, cache = predictor.cell.step(X[:, step], h, c)
        caches.append(cache)
        hs[:, step] = h
    preds = predictor.readout.forward(hs.reshape(b * t, -1)).reshape(b, t, -1)
    diff = (preds - Y) * M[..., None]
    sumsq = float(np.sum(diff.astype(np.float64) ** 2))
    n_valid = float(M.sum()) * Y.shape[-1]
    if compute_grads and n_valid > 0:
        dpred = (2.0 / n_valid) * diff
        dh_seq = predictor.readout.backward(
            dpred.reshape(b * t, -1).astype(h.dtype)
        ).reshape(b, t, -1)
        dh_next = np.zeros_like(h)
        dc_next = np.zeros_like(c)
        for step in reversed(range(t)):
            _, dh_next, dc_next = predictor.cell.backward_step(
                dh_seq[:, step] + dh_next, dc_next, caches[step])
    return sumsq, n_valid, (h, c)


def train_predictor(episodes, enc_rgb: Autoencoder, enc_disp: Autoencoder,
                    stats: NormStats, config: TrainConfig):
    """TBPTT training of the one-step state predictor with frozen encoders.

    Episodes run in parallel as a padded batch; hidden state resets at
    episode boundaries (each epoch starts from zeros). Returns
    (predictor, per-epoch losses) where each loss is the mean squared
    error over every valid element of the epoch.
    """
    config.validate()
    if len(episodes) < 2:
        raise ValueError("need at least 2 episodes")
    seqs, include_cmd = _episode_sequences(episodes, enc_rgb, enc_disp, stats, config)
    X, Y, M = _pad_batch(seqs)
    d_state = Y.shape[-1]
    rng = np.random.default_rng([config.seed, 3])
    predictor = Predictor(config.latent, d_state, config.hidden, rng)
    params = predictor.named_params()
    opt = nn.Adam([p for _, p in params], config.lr, config.beta1, config.beta2, config.eps)

    losses = []
    lmax = X.shape[1]
    for epoch in range(config.epochs):
        h, c = predictor.zero_state(X.shape[0])
        sumsq = 0.0
        count = 0.0
        for w0 in range(0, lmax, config.tbptt):
            Xw = X[:, w0:w0 + config.tbptt]
            Yw = Y[:, w0:w0 + config.tbptt]
            Mw = M[:, w0:w0 + config.tbptt]
            if Mw.sum() == 0:
                break
            opt.zero_grad()
            s, n, (h, c) = predictor_window_pass(predictor, Xw, Yw, Mw, h, c)
            nn.clip_grad_norm([p for _, p in params], config.grad_clip)
            opt.step()
            sumsq += s
            count += n
        loss = sumsq / count
        if not np.isfinite(loss):
            raise nn.TrainingDiverged(f"non-finite predictor loss at epoch {epoch}")
        nn.check_finite(params, f"predictor epoch {epoch}")
        losses.append(loss)
    return predictor, losses


# ----------------------------------------------------------------------
# finite-difference gradient verification


@dataclass
class GradCheckResult:
    name: str
    max_rel_err: float
    threshold: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.threshold


def _numeric_grads(loss_fn, params, h: float = 1e-5):
    grads = []
    for p in params:
        g = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            flat[i] = orig
            gf[i] = (lp - lm) / (2.0 * h)
        grads.append(g)
    return grads


def _max_rel_err(analytic, numeric) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def _check_net(layers, x, target, params):
    net = nn.Sequential(layers)

    def loss_fn():
        out = net.forward(x)
        loss, _ = nn.loss_mse(out, target)
        return loss

    for _, p in params:
        p.grad[...] = 0.0
    out = net.forward(x)
    _, dout = nn.loss_mse(out, target)
    net.backward(dout)
    analytic = [p.grad.copy() for _, p in params]
    numeric = _numeric_grads(loss_fn, [p for _, p in params])
    return _max_rel_err(analytic, numeric)


def gradcheck(kind: str, seed: int = 0) -> GradCheckResult:
    """Compare analytic parameter gradients to 64-bit central differences."""
    rng = np.random.default_rng([seed, 99])
    f64 = np.float64

    if kind == "mse":
        x = rng.normal(size=(4, 3))
        y = rng.normal(size=(4, 3))
        _, analytic = nn.loss_mse(x, y)
        numeric = np.empty_like(x)
        h = 1e-5  # the loss is quadratic, so central differences are exact up to rounding
        for i in np.ndindex(x.shape):
            orig = x[i]
            x[i] = orig + h
            lp, _ = nn.loss_mse(x, y)
            x[i] = orig - h
            lm, _ = nn.loss_mse(x, y)
            x[i] = orig
            numeric[i] = (lp - lm) / (2.0 * h)
        err = float(np.max(np.abs(analytic - numeric)))
        return GradCheckResult(kind, err, threshold=1e-9)

    if kind == "dense":
        layers = [nn.Dense(5, 7, rng, dtype=f64), nn.ReLU(), nn.Dense(7, 3, rng, dtype=f64)]
        x = rng.normal(size=(4, 5))
        t = rng.normal(size=(4, 3))
    elif kind == "conv":
        layers = [nn.Conv2d(2, 3, rng, stride=1, dtype=f64), nn.ReLU(), nn.Flatten(),
                  nn.Dense(5 * 5 * 3, 4, rng, dtype=f64)]
        x = rng.normal(size=(2, 5, 5, 2))
        t = rng.normal(size=(2, 4))
    elif kind == "conv_stride2":
        layers = [nn.Conv2d(2, 3, rng, stride=2, dtype=f64), nn.Flatten(),
                  nn.Dense(3 * 3 * 3, 4, rng, dtype=f64)]
        x = rng.normal(size=(2, 6, 6, 2))
        t = rng.normal(size=(2, 4))
    elif kind == "upsample":
        layers = [nn.Dense(6, 2 * 2 * 2, rng, dtype=f64), nn.Reshape(2, 2, 2),
                  nn.Upsample2x(), nn.Conv2d(2, 2, rng, stride=1, dtype=f64)]
        x = rng.normal(size=(3, 6))
        t = rng.normal(size=(3, 4, 4, 2))
    elif kind == "autoencoder":
        ae = Autoencoder(1, 8, 3, rng, dtype=f64)
        x = rng.normal(size=(2, 8, 8, 1))
        params = ae.named_params()

        def ae_loss():
            loss, _ = nn.loss_mse(ae.forward(x), x)
            return loss

        for _, p in params:
            p.grad[...] = 0.0
        _, dout = nn.loss_mse(ae.forward(x), x)
        ae.backward(dout)
        analytic = [p.grad.copy() for _, p in params]
        numeric = _numeric_grads(ae_loss, [p for _, p in params])
        return GradCheckResult(kind, _max_rel_err(analytic, numeric))
    elif kind in ("lstm", "predictor"):
        pred = Predictor(latent=2, d_state=3, hidden=5, rng=rng, dtype=f64)
        steps = 5
        X = rng.normal(size=(2, steps, pred.n_in))
        Y = rng.normal(size=(2, steps, 3))
        M = np.ones((2, steps))
        M[1, -2:] = 0.0  # exercise the masked path
        params = pred.named_params()

        def seq_loss():
            h, c = pred.zero_state(2)
            s, n, _ = predictor_window_pass(pred, X, Y, M, h, c, compute_grads=False)
            return s / n

        for _, p in params:
            p.grad[...] = 0.0
        h, c = pred.zero_state(2)
        predictor_window_pass(pred, X, Y, M, h, c)
        analytic = [p.grad.copy() for _, p in params]
        numeric = _numeric_grads(seq_loss, [p for _, p in params])
        return GradCheckResult(kind, _max_rel_err(analytic, numeric))
    else:
        raise ValueError(f"unknown gradcheck kind {kind!r}")

    params = nn.Sequential(layers).named_params("net")
    return GradCheckResult(kind, _check_net(layers, x, t, params))


GRADCHECK_KINDS = ("mse", "dense", "conv", "conv_stride2", "upsample", "lstm", "autoencoder")


def gradcheck_all(seed: int = 0):
    return [gradcheck(kind, seed) for kind in GRADCHECK_KINDS]
