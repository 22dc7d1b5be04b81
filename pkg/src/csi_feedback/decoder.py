"""Deep-unfolded ISTA decoder and the anchor-scenario training loop.

Each unfolding block alternates a gradient step on the measurement-fidelity
term with a learned proximal step: a convolutional transform, soft
thresholding, the symmetric inverse transform, and a residual connection.
The measurement matrix is a trainable parameter shared with the encoder,
so the whole codec is optimized end to end.
"""

from dataclasses import dataclass, asdict
import csv
import hashlib
import json
import math
import os

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .channel import ArrayDims, DEFAULT_DIMS
from .codec import Codeword, payload_length, devectorize
from .errors import TrainingDivergedError, DatasetFormatError

CHECKPOINT_FORMAT_VERSION = 1


def soft_threshold(x, theta):
    """Elementwise sgn(x) * max(0, |x| - theta)."""
    return torch.sign(x) * torch.clamp(torch.abs(x) - theta, min=0.0)


def gradient_step(x_prev, y, phi, rho):
    """One fidelity-gradient step: x - rho * Phi^T (Phi x - y)."""
    return x_prev - rho * ((x_prev @ phi.T - y) @ phi)


def vec_to_image(x, dims):
    """(B, N) vectors -> (B, 2, r_d, n_b) images; channel 0 real, channel 1 imag."""
    return x.view(-1, 2, dims.r_d, dims.n_b)


def image_to_vec(img):
    return img.reshape(img.shape[0], -1)


def _init_conv(conv, gen):
    fan_in = conv.weight.shape[1] * 9
    fan_out = conv.weight.shape[0] * 9
    std = math.sqrt(2.0 / (fan_in + fan_out))
    with torch.no_grad():
        conv.weight.normal_(0.0, std, generator=gen)
    return conv


def _softplus_inverse(v):
    return math.log(math.expm1(v))


class IterationBlock(nn.Module):
    """One unfolding iteration: learned step size, threshold, and conv operators."""

    def __init__(self, channels=32, gen=None):
        super().__init__()
        self.rho = nn.Parameter(torch.tensor(0.5))
        # raw value passes through softplus at use time so the threshold stays >= 0
        self.theta_raw = nn.Parameter(torch.tensor(_softplus_inverse(0.01)))
        conv = lambda c_in, c_out: _init_conv(
            nn.Conv2d(c_in, c_out, 3, padding=1, bias=False), gen)
        self.extract = conv(2, channels)
        self.analysis = nn.Sequential(conv(channels, channels), nn.ReLU(),
                                      conv(channels, channels))
        self.synthesis = nn.Sequential(conv(channels, channels), nn.ReLU(),
                                       conv(channels, channels))
        self.project = conv(channels, 2)

    @property
    def theta(self):
        return F.softplus(self.theta_raw)

    def forward(self, r_img, compute_constraint=False):
        m = self.extract(r_img)
        h = self.analysis(m)
        x_img = r_img + self.project(self.synthesis(soft_threshold(h, self.theta)))
        constraint = self.synthesis(h) - m if compute_constraint else None
        return x_img, constraint


class UnfoldedDecoder(nn.Module):
    """Stack of unfolding blocks plus the shared trainable measurement matrix."""

    def __init__(self, cr=1 / 4, dims=DEFAULT_DIMS, n_iters=9, channels=32, seed=0,
                 trainable_phi=True):
        super().__init__()
        if n_iters < 1:
            raise ValueError(f"need at least one iteration block; got {n_iters}")
        self.cr = cr
        self.dims = dims
        self.n_iters = n_iters
        self.channels = channels
        self.seed = seed
        self.trainable_phi = trainable_phi
        n = dims.csi_vector_len
        l_y = payload_length(cr, n)
        gen = torch.Generator().manual_seed(seed)
        phi0 = torch.randn(l_y, n, generator=gen) / math.sqrt(n)
        self.phi = nn.Parameter(phi0, requires_grad=trainable_phi)
        self.blocks = nn.ModuleList(
            [IterationBlock(channels, gen) for _ in range(n_iters)])

    def forward(self, y, compute_constraint=False):
        """Reconstruct unit-sphere CSI vectors from measurements y of shape (B, L)."""
        x = y @ self.phi  # adjoint initialization Phi^T y
        constraints = []
        for blk in self.blocks:
            r = gradient_step(x, y, self.phi, blk.rho)
            x_img, c = blk(vec_to_image(r, self.dims), compute_constraint)
            x = image_to_vec(x_img)
            if c is not None:
                constraints.append(c)
        return x, constraints

    def encode_vectors(self, x):
        """Measurements for a batch of CSI vectors (the encoder's Phi multiply)."""
        return x @ self.phi.T

    def parameter_blob(self):
        """All parameters concatenated in checkpoint order, as float32 bytes."""
        parts = [p.detach().cpu().numpy().astype("<f4").tobytes()
                 for p in self.parameters()]
        return b"".join(parts)

    def checksum(self):
        return hashlib.sha256(self.parameter_blob()).hexdigest()


def decode(codeword, decoder):
    """Recover the complex channel matrix from one feedback codeword."""
    dtype = decoder.phi.dtype
    y = torch.as_tensor(np.asarray(codeword.y), dtype=dtype).unsqueeze(0)
    with torch.no_grad():
        x, _ = decoder(y)
    h_unit = devectorize(x[0].cpu().numpy().astype(np.float64), decoder.dims)
    return codeword.p * h_unit


def decode_vectors(decoder, y):
    """Batch decode measurements (B, L) -> unit-sphere vectors (B, N), no gradients."""
    with torch.no_grad():
        x, _ = decoder(y)
    return x


def loss_components(decoder, x_true, gamma):
    """Run the decoder on a batch of CSI vectors and evaluate the training loss.

    Returns (total, mse, constraint, x_out).  The MSE and the symmetry
    constraint are both normalized by batch size times vector length; the
    constraint term sums over iteration blocks.
    """
    if x_true.shape[0] == 0:
        raise ValueError("empty batch")
    y = decoder.encode_vectors(x_true)
    x_out, constraints = decoder(y, compute_constraint=True)
    denom = x_true.shape[0] * x_true.shape[1]
    mse = (x_out - x_true).pow(2).sum() / denom
    con = sum(c.pow(2).sum() for c in constraints) / denom
    total = mse + gamma * con
    return total, mse, con, x_out


@dataclass
class TrainConfig:
    gamma: float = 0.01
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    # learning rate is multiplied by lr_decay_factor at each milestone epoch
    lr_milestones: tuple = ()
    lr_decay_factor: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative; got {self.gamma}")
        self.lr_milestones = tuple(self.lr_milestones)


def dataset_to_vectors(ds, dims=None):
    """Spherical-normalize every sample and stack the CSI vectors, (n, N) float32."""
    samples = np.asarray(ds.samples if hasattr(ds, "samples") else ds)
    n = samples.shape[0]
    flat = samples.reshape(n, -1)
    norms = np.linalg.norm(flat, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    unit = flat / norms
    x = np.concatenate([unit.real, unit.imag], axis=1)
    return torch.as_tensor(x, dtype=torch.float32)


def eval_nmse_db(decoder, x_true, batch_size=256):
    """NMSE (dB) of decoder reconstructions against unit-sphere truth vectors."""
    errs = []
    for k in range(0, x_true.shape[0], batch_size):
        xb = x_true[k:k + batch_size]
        y = decoder.encode_vectors(xb).detach()
        x_hat = decode_vectors(decoder, y)
        errs.append(((x_hat - xb).pow(2).sum(dim=1) / xb.pow(2).sum(dim=1)))
    nmse = torch.cat(errs).mean().item()
    return 10.0 * math.log10(max(nmse, 1e-30))


def train_anchor(train_ds, cfg, decoder=None, val_ds=None, log_path=None,
                 verbose=False):
    """Jointly optimize the measurement matrix and all block parameters.

    Returns (decoder, log) where log is a list of per-epoch dicts.
    """
    if len(train_ds) == 0:
        raise ValueError("training dataset is empty")
    if decoder is None:
        decoder = UnfoldedDecoder(seed=cfg.seed)
    x = dataset_to_vectors(train_ds)
    x_val = dataset_to_vectors(val_ds) if val_ds is not None else None
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(decoder.parameters(), lr=cfg.learning_rate)
    log = []
    for epoch in range(cfg.epochs):
        if epoch in cfg.lr_milestones:
            for group in opt.param_groups:
                group["lr"] *= cfg.lr_decay_factor
        perm = torch.randperm(x.shape[0], generator=gen)
        tot = m = c = 0.0
        n_batches = 0
        for k in range(0, x.shape[0], cfg.batch_size):
            xb = x[perm[k:k + cfg.batch_size]]
            if xb.shape[0] == 0:
                continue
            opt.zero_grad()
            loss, mse, con, _ = loss_components(decoder, xb, cfg.gamma)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}: {loss.item()}")
            loss.backward()
            opt.step()
            tot += loss.item()
            m += mse.item()
            c += con.item()
            n_batches += 1
        row = {
            "epoch": epoch,
            "loss_total": tot / n_batches,
            "loss_mse": m / n_batches,
            "loss_constraint": c / n_batches,
            "val_nmse_db": eval_nmse_db(decoder, x_val) if x_val is not None
            else float("nan"),
        }
        log.append(row)
        if verbose:
            print(f"epoch {epoch}: loss={row['loss_total']:.6f} "
                  f"val_nmse={row['val_nmse_db']:.2f} dB")
    if log_path is not None:
        write_training_log(log, log_path)
    return decoder, log


def write_training_log(log, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(
            f, fieldnames=["epoch", "loss_total", "loss_mse", "loss_constraint",
                           "val_nmse_db"])
        w.writeheader()
        w.writerows(log)


def save_checkpoint(decoder, path, epoch=None):
    """Write manifest.json + raw float32 parameter blob with fixed ordering.

    Parameter order is the module registration order: phi first, then per
    block rho, theta_raw, extract, analysis (2 convs), synthesis (2 convs),
    project.
    """
    os.makedirs(path, exist_ok=True)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "cr": decoder.cr,
        "n_iters": decoder.n_iters,
        "channels": decoder.channels,
        "r_d": decoder.dims.r_d,
        "n_b": decoder.dims.n_b,
        "n_f": decoder.dims.n_f,
        "seed": decoder.seed,
        "trainable_phi": decoder.trainable_phi,
        "epoch": epoch,
        "param_order": "phi, then per block: rho, theta_raw, extract, "
                       "analysis conv1, analysis conv2, synthesis conv1, "
                       "synthesis conv2, project; float32 little-endian",
    }
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
    with open(os.path.join(path, "params.bin"), "wb") as f:
        f.write(decoder.parameter_blob())


def load_checkpoint(path):
    with open(os.path.join(path, "manifest.json")) as f:
        manifest = json.load(f)
    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported checkpoint format_version: {manifest.get('format_version')}")
    dims = ArrayDims(n_f=manifest["n_f"], n_b=manifest["n_b"], r_d=manifest["r_d"])
    decoder = UnfoldedDecoder(cr=manifest["cr"], dims=dims,
                              n_iters=manifest["n_iters"],
                              channels=manifest["channels"],
                              seed=manifest["seed"],
                              trainable_phi=manifest["trainable_phi"])
    raw = np.fromfile(os.path.join(path, "params.bin"), dtype="<f4")
    expected = sum(p.numel() for p in decoder.parameters())
    if raw.size != expected:
        raise DatasetFormatError(
            f"params.bin holds {raw.size} values, model expects {expected}")
    k = 0
    with torch.no_grad():
        for p in decoder.parameters():
            p.copy_(torch.from_numpy(raw[k:k + p.numel()].copy()).view_as(p))
            k += p.numel()
    return decoder
