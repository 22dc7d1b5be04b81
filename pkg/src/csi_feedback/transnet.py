"""Scenario adaptation: sparsity-aligning circular shifts and plug-in
translation / retranslation networks trained against a frozen anchor codec.

A new scenario's CSI is circularly shifted in the angular-delay domain so
its sparse support lines up with the anchor scenario, then passed through a
small translation CNN before the pretrained encoder.  The gNB side applies
the pretrained decoder, a retranslation CNN, and the inverse shift.  Only
the two small CNNs are trained per scenario; the anchor stays frozen.
"""

from dataclasses import dataclass
import hashlib
import json
import math
import os

import numpy as np
import torch
import torch.nn as nn

from .channel import DEFAULT_DIMS
from .decoder import vec_to_image, image_to_vec, gradient_step
from .errors import TrainingDivergedError, DatasetFormatError, ConfigurationError

PLUGIN_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ShiftSteps:
    """Row/column circular shift pair, stored reduced modulo (r_d, n_b)."""

    i: int
    j: int

    @classmethod
    def reduced(cls, i, j, dims=DEFAULT_DIMS):
        return cls(i % dims.r_d, j % dims.n_b)

    def inverse(self, dims=DEFAULT_DIMS):
        return ShiftSteps.reduced(-self.i, -self.j, dims)


def circular_shift(h, i, j):
    """out[m, n] = h[(m - i) mod r_d, (n - j) mod n_b]."""
    return np.roll(np.asarray(h), (i, j), axis=(0, 1))


def _complex_to_image(samples):
    """(B, r_d, n_b) complex -> (B, 2, r_d, n_b) float tensor."""
    arr = np.stack([samples.real, samples.imag], axis=1)
    return torch.as_tensor(arr, dtype=torch.float32)


def _image_to_complex(img):
    arr = img.detach().cpu().numpy()
    return arr[:, 0] + 1j * arr[:, 1]


def _near_identity_init(convs, transposed, noise):
    """Start a plug-in net as (approximately) the identity map.

    The two signal channels are split into positive/negative parts on the
    way in (so they survive the ReLUs), carried through the middle layers
    on dedicated channels, and recombined by the last layer.  Small noise
    keeps the spare channels trainable.  Training therefore starts from
    the plain aligned pipeline and only has to learn the refinement.
    """
    first, mid_a, mid_b, last = convs
    with torch.no_grad():
        for conv in convs:
            conv.weight.zero_()
            conv.bias.zero_()

        def w(conv, out_c, in_c, value):
            if transposed:  # ConvTranspose2d stores (in, out, kh, kw)
                conv.weight[in_c, out_c, 1, 1] = value
            else:
                conv.weight[out_c, in_c, 1, 1] = value

        for c in range(2):
            w(first, c, c, 1.0)       # +x on channels 0, 1
            w(first, c + 2, c, -1.0)  # -x on channels 2, 3
        for c in range(4):
            w(mid_a, c, c, 1.0)
            w(mid_b, c, c, 1.0)
        for c in range(2):
            w(last, c, c, 1.0)        # relu(x) - relu(-x) = x
            w(last, c, c + 2, -1.0)
        for conv in convs:
            conv.weight.add_(torch.randn_like(conv.weight) * noise)


class TranslationNet(nn.Module):
    """UE-side plug-in: 4 conv layers, 2 -> 16 -> 8 -> 4 -> 2 feature maps.

    1,830 trainable parameters with biases, initialized near the identity
    map; an explicit bypass flag turns the net into the exact identity for
    diagnostics.
    """

    def __init__(self, identity=False, init_noise=0.02):
        super().__init__()
        self.identity = identity
        self.net = nn.Sequential(
            nn.Conv2d(2, 16, 3, padding=1), nn.ReLU(),
            nn.Conv2d(16, 8, 3, padding=1), nn.ReLU(),
            nn.Conv2d(8, 4, 3, padding=1), nn.ReLU(),
            nn.Conv2d(4, 2, 3, padding=1),
        )
        _near_identity_init([self.net[0], self.net[2], self.net[4], self.net[6]],
                            transposed=False, noise=init_noise)

    def forward(self, img):
        if self.identity:
            return img
        return self.net(img)


class RetranslationNet(nn.Module):
    """gNB-side plug-in: 4 transposed-conv layers, 2 -> 32 -> 16 -> 8 -> 2,
    initialized near the identity map."""

    def __init__(self, identity=False, init_noise=0.02):
        super().__init__()
        self.identity = identity
        self.net = nn.Sequential(
            nn.ConvTranspose2d(2, 32, 3, padding=1), nn.ReLU(),
            nn.ConvTranspose2d(32, 16, 3, padding=1), nn.ReLU(),
            nn.ConvTranspose2d(16, 8, 3, padding=1), nn.ReLU(),
            nn.ConvTranspose2d(8, 2, 3, padding=1),
        )
        _near_identity_init([self.net[0], self.net[2], self.net[4], self.net[6]],
                            transposed=True, noise=init_noise)

    def forward(self, img):
        if self.identity:
            return img
        return self.net(img)


def count_parameters(module):
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def _normalize_images(img):
    """Per-sample Frobenius normalization of a (B, 2, r_d, n_b) batch.

    The plug-in nets always see unit-power CSI so the path-loss spread
    neither skews their training loss nor their activations; the norm is
    reapplied after retranslation.
    """
    norms = img.flatten(1).norm(dim=1).clamp(min=1e-12)
    return img / norms.view(-1, 1, 1, 1), norms


def _anchor_forward(decoder, img):
    """Differentiable spherical encode + unfolded decode of a batch of images.

    The power scalar is carried alongside the codeword exactly as in the
    scalar pipeline; zero-power samples pass through as zeros.
    """
    b = img.shape[0]
    x = image_to_vec(img)
    p = x.norm(dim=1, keepdim=True)
    safe_p = torch.clamp(p, min=1e-12)
    x_unit = x / safe_p
    y = decoder.encode_vectors(x_unit)
    x_hat, _ = decoder(y)
    return vec_to_image(x_hat * p, decoder.dims)


def recovery_error(decoder, samples):
    """Sum over samples of squared recovery error of the frozen anchor codec."""
    img = _complex_to_image(np.asarray(samples)).to(decoder.phi.dtype)
    with torch.no_grad():
        out = _anchor_forward(decoder, img)
        return (out - img).pow(2).sum().item()


def search_shift_steps(samples, decoder, delay_range=None, angular_range=None,
                       max_samples=64, rng=None):
    """Exhaustive shift search minimizing anchor recovery error.

    Evaluates every (i, j) on the grid (full r_d x n_b by default), summing
    squared recovery error over at most ``max_samples`` CSI samples.  Ties
    break to the lexicographically smallest reduced (i, j).
    """
    samples = np.asarray(samples)
    if samples.shape[0] == 0:
        raise ValueError("shift search needs at least one sample")
    dims = decoder.dims
    if samples.shape[0] > max_samples:
        rng = rng or np.random.default_rng(0)
        idx = rng.choice(samples.shape[0], size=max_samples, replace=False)
        samples = samples[idx]
    rows = range(dims.r_d) if delay_range is None else delay_range
    cols = range(dims.n_b) if angular_range is None else angular_range
    best = None
    best_err = math.inf
    for i in rows:
        for j in cols:
            shifted = np.roll(samples, (i % dims.r_d, j % dims.n_b), axis=(1, 2))
            err = recovery_error(decoder, shifted)
            steps = ShiftSteps.reduced(i, j, dims)
            key = (err, steps.i, steps.j)
            if best is None or key < (best_err, best.i, best.j):
                best, best_err = steps, err
    return best


def cross_correlation_shift(samples, anchor_samples, dims=DEFAULT_DIMS):
    """Cheap alternative: argmax of circular cross-correlation of mean
    magnitude maps, shifting the new samples toward the anchor's support."""
    samples = np.asarray(samples)
    anchor_samples = np.asarray(anchor_samples)
    if samples.shape[0] == 0 or anchor_samples.shape[0] == 0:
        raise ValueError("both sample sets must be nonempty")
    new_map = np.abs(samples).mean(axis=0)
    anchor_map = np.abs(anchor_samples).mean(axis=0)
    # corr[i, j] = sum_{m,n} anchor[m, n] * new[(m - i) mod, (n - j) mod]
    corr = np.fft.ifft2(np.fft.fft2(anchor_map) * np.conj(np.fft.fft2(new_map))).real
    flat = np.round(corr, decimals=9)  # de-noise float ties so argmax is stable
    i, j = np.unravel_index(np.argmax(flat), flat.shape)
    return ShiftSteps.reduced(int(i), int(j), dims)


def train_transnet(new_ds, decoder, steps, cfg, translation=None, retranslation=None,
                   verbose=False):
    """Train the plug-in pair against the frozen anchor.

    Minimizes mean squared error between the aligned CSI and its recovery
    through translate -> anchor codec -> retranslate.  Anchor parameters
    receive no updates; a checksum assertion guards the frozen contract.
    Returns (translation, retranslation, log).
    """
    if len(new_ds) == 0:
        raise ValueError("training dataset is empty")
    torch.manual_seed(cfg.seed)
    translation = translation or TranslationNet()
    retranslation = retranslation or RetranslationNet()
    anchor_sum = decoder.checksum()
    for p in decoder.parameters():
        p.requires_grad_(False)
    aligned = np.roll(np.asarray(new_ds.samples), (steps.i, steps.j), axis=(1, 2))
    target, _ = _normalize_images(_complex_to_image(aligned))
    params = list(translation.parameters()) + list(retranslation.parameters())
    opt = torch.optim.Adam(params, lr=cfg.learning_rate)
    gen = torch.Generator().manual_seed(cfg.seed)
    log = []
    for epoch in range(cfg.epochs):
        perm = torch.randperm(target.shape[0], generator=gen)
        tot = 0.0
        n_batches = 0
        for k in range(0, target.shape[0], cfg.batch_size):
            tb = target[perm[k:k + cfg.batch_size]]
            if tb.shape[0] == 0:
                continue
            opt.zero_grad()
            out = retranslation(_anchor_forward(decoder, translation(tb)))
            loss = (out - tb).pow(2).sum() / tb.shape[0]
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}: {loss.item()}")
            loss.backward()
            opt.step()
            tot += loss.item()
            n_batches += 1
        log.append({"epoch": epoch, "loss_total": tot / n_batches})
        if verbose:
            print(f"transnet epoch {epoch}: loss={tot / n_batches:.6f}")
    assert decoder.checksum() == anchor_sum, "anchor parameters were modified"
    return translation, retranslation, log


def feedback_new_scenario(h, steps, translation, retranslation, decoder):
    """Full new-scenario feedback path for one CSI matrix:
    align -> translate -> anchor codec -> retranslate -> dealign."""
    if translation is None or retranslation is None or decoder is None:
        raise ConfigurationError("translation, retranslation, and anchor required")
    h = np.asarray(h)
    aligned = circular_shift(h, steps.i, steps.j)
    img = _complex_to_image(aligned[None]).to(decoder.phi.dtype)
    unit, norms = _normalize_images(img)
    with torch.no_grad():
        out = retranslation(_anchor_forward(decoder, translation(unit)))
    recovered = _image_to_complex(out * norms.view(-1, 1, 1, 1))[0]
    return circular_shift(recovered, -steps.i, -steps.j)


def evaluate_new_scenario(samples, steps, translation, retranslation, decoder,
                          batch_size=256):
    """Batched feedback_new_scenario over a test set; returns recovered samples."""
    samples = np.asarray(samples)
    aligned = np.roll(samples, (steps.i, steps.j), axis=(1, 2))
    outs = []
    with torch.no_grad():
        for k in range(0, aligned.shape[0], batch_size):
            img = _complex_to_image(aligned[k:k + batch_size]).to(decoder.phi.dtype)
            unit, norms = _normalize_images(img)
            out = retranslation(_anchor_forward(decoder, translation(unit)))
            outs.append(_image_to_complex(out * norms.view(-1, 1, 1, 1)))
    recovered = np.concatenate(outs, axis=0)
    return np.roll(recovered, (-steps.i, -steps.j), axis=(1, 2))


def save_plugin(translation, retranslation, steps, path, anchor_checksum,
                scenario_name=""):
    """Plug-in checkpoint: manifest + float32 blobs; the translation blob
    alone is what a UE would download."""
    os.makedirs(path, exist_ok=True)
    tra = b"".join(p.detach().numpy().astype("<f4").tobytes()
                   for p in translation.parameters())
    ret = b"".join(p.detach().numpy().astype("<f4").tobytes()
                   for p in retranslation.parameters())
    manifest = {
        "format_version": PLUGIN_FORMAT_VERSION,
        "anchor_checksum": anchor_checksum,
        "shift_i": steps.i,
        "shift_j": steps.j,
        "scenario": scenario_name,
        "translation_bytes": len(tra),
        "retranslation_bytes": len(ret),
    }
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
    with open(os.path.join(path, "translation.bin"), "wb") as f:
        f.write(tra)
    with open(os.path.join(path, "retranslation.bin"), "wb") as f:
        f.write(ret)


def load_plugin(path):
    with open(os.path.join(path, "manifest.json")) as f:
        manifest = json.load(f)
    if manifest.get("format_version") != PLUGIN_FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported plugin format_version: {manifest.get('format_version')}")
    translation = TranslationNet()
    retranslation = RetranslationNet()
    for module, fname in ((translation, "translation.bin"),
                          (retranslation, "retranslation.bin")):
        raw = np.fromfile(os.path.join(path, fname), dtype="<f4")
        expected = sum(p.numel() for p in module.parameters())
        if raw.size != expected:
            raise DatasetFormatError(
                f"{fname} holds {raw.size} values, model expects {expected}")
        k = 0
        with torch.no_grad():
            for p in module.parameters():
                p.copy_(torch.from_numpy(raw[k:k + p.numel()].copy()).view_as(p))
                k += p.numel()
    steps = ShiftSteps(manifest["shift_i"], manifest["shift_j"])
    return translation, retranslation, steps, manifest
