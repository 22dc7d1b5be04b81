"""Synthetic multipath channel generation and angular-delay transforms.

The spatial-frequency channel matrix (subcarriers x gNB antennas) is built
from a small number of propagation paths, each with a delay, an azimuth
angle seen by the uniform linear array, and a complex gain shaped by an
exponential power-delay profile.  A 2D unitary DFT moves the matrix into
the angular-delay domain, where multipath structure is concentrated in the
first few delay rows and the matrix can be truncated.
"""

from dataclasses import dataclass, field, asdict
import json
import math
import os

import numpy as np

from .errors import ConfigurationError, DimensionError, DatasetFormatError

DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ArrayDims:
    """Global system dimensions: subcarriers, gNB antennas, kept delay rows."""

    n_f: int = 256
    n_b: int = 32
    r_d: int = 32

    def __post_init__(self):
        if not (0 < self.r_d <= self.n_f):
            raise ConfigurationError(
                f"r_d must be in (0, n_f]; got r_d={self.r_d}, n_f={self.n_f}"
            )
        if self.n_b <= 0:
            raise ConfigurationError(f"n_b must be positive; got {self.n_b}")

    @property
    def csi_vector_len(self):
        # real+imag parts of the truncated matrix
        return 2 * self.r_d * self.n_b


DEFAULT_DIMS = ArrayDims()


@dataclass
class ScenarioConfig:
    """Parameters of one synthetic propagation scenario.

    ``angle_offset`` / ``delay_offset_bins`` let a "new" scenario be a
    shifted copy of an anchor scenario, which gives a known-answer target
    for the sparsity-aligning shift search.
    """

    name: str = "anchor"
    num_paths: int = 8
    max_delay_bins: float = 24.0
    delay_decay: float = 8.0
    pathloss_range_db: float = 40.0
    angle_offset: float = 0.0
    delay_offset_bins: float = 0.0
    seed: int = 0

    def validate(self, dims=DEFAULT_DIMS):
        if self.num_paths < 1:
            raise ConfigurationError(f"num_paths must be >= 1; got {self.num_paths}")
        if not (1.0 <= self.max_delay_bins < dims.r_d):
            raise ConfigurationError(
                f"max_delay_bins must lie in [1, r_d={dims.r_d}); got {self.max_delay_bins}"
            )
        if self.delay_decay <= 0:
            raise ConfigurationError(f"delay_decay must be positive; got {self.delay_decay}")
        if self.pathloss_range_db < 0:
            raise ConfigurationError(
                f"pathloss_range_db must be nonnegative; got {self.pathloss_range_db}"
            )
        return self


def channel_from_paths(alphas, taus, thetas, dims=DEFAULT_DIMS):
    """Spatial-frequency channel matrix from explicit path parameters.

    H[m, n] = sum_p alpha_p * exp(-j*2*pi*m*tau_p / n_f) * exp(-j*pi*n*sin(theta_p))
    """
    alphas = np.asarray(alphas, dtype=np.complex128)
    taus = np.asarray(taus, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    if not (alphas.shape == taus.shape == thetas.shape):
        raise DimensionError("alphas, taus, thetas must have identical shapes")
    m = np.arange(dims.n_f)[:, None, None]
    n = np.arange(dims.n_b)[None, :, None]
    delay_phase = np.exp(-2j * np.pi * m * taus / dims.n_f)
    angle_phase = np.exp(-1j * np.pi * n * np.sin(thetas))
    return np.sum(alphas * delay_phase * angle_phase, axis=-1)


def generate_channel(cfg, sample_index, dims=DEFAULT_DIMS):
    """Draw one spatial-frequency channel matrix, deterministic in (cfg.seed, sample_index)."""
    cfg.validate(dims)
    rng = np.random.default_rng([cfg.seed, int(sample_index)])
    taus = rng.uniform(
        cfg.delay_offset_bins, cfg.delay_offset_bins + cfg.max_delay_bins, cfg.num_paths
    )
    thetas = rng.uniform(-np.pi / 2, np.pi / 2, cfg.num_paths) + cfg.angle_offset
    gains = (rng.standard_normal(cfg.num_paths) + 1j * rng.standard_normal(cfg.num_paths))
    gains *= np.exp(-taus / cfg.delay_decay) / math.sqrt(2.0)
    # per-sample log-uniform path loss spread (amplitude scale)
    scale_db = rng.uniform(-cfg.pathloss_range_db / 2, cfg.pathloss_range_db / 2)
    scale = 10.0 ** (scale_db / 20.0)
    return scale * channel_from_paths(gains, taus, thetas, dims)


def to_angular_delay(h_sf, dims=DEFAULT_DIMS):
    """Unitary 2D DFT into the angular-delay domain, keeping the first r_d rows."""
    h_sf = np.asarray(h_sf)
    if h_sf.shape != (dims.n_f, dims.n_b):
        raise DimensionError(
            f"expected shape {(dims.n_f, dims.n_b)}, got {h_sf.shape}"
        )
    full = np.fft.ifft(h_sf, axis=0) * math.sqrt(dims.n_f)
    full = np.fft.fft(full, axis=1) / math.sqrt(dims.n_b)
    return full[: dims.r_d]


def full_angular_delay(h_sf, dims=DEFAULT_DIMS):
    """Untruncated angular-delay transform (all n_f rows); used for energy checks."""
    h_sf = np.asarray(h_sf)
    if h_sf.shape != (dims.n_f, dims.n_b):
        raise DimensionError(
            f"expected shape {(dims.n_f, dims.n_b)}, got {h_sf.shape}"
        )
    full = np.fft.ifft(h_sf, axis=0) * math.sqrt(dims.n_f)
    return np.fft.fft(full, axis=1) / math.sqrt(dims.n_b)


def from_angular_delay(h_ad, dims=DEFAULT_DIMS):
    """Inverse transform: zero-pad the truncated rows and undo the 2D DFT."""
    h_ad = np.asarray(h_ad)
    if h_ad.shape != (dims.r_d, dims.n_b):
        raise DimensionError(
            f"expected shape {(dims.r_d, dims.n_b)}, got {h_ad.shape}"
        )
    padded = np.zeros((dims.n_f, dims.n_b), dtype=np.complex128)
    padded[: dims.r_d] = h_ad
    out = np.fft.fft(padded, axis=0) / math.sqrt(dims.n_f)
    return np.fft.ifft(out, axis=1) * math.sqrt(dims.n_b)


@dataclass
class Dataset:
    """Ordered collection of truncated angular-delay CSI samples."""

    samples: np.ndarray  # (n, r_d, n_b) complex
    scenario: ScenarioConfig
    split: str = "train"
    name: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 3:
            raise DimensionError(
                f"samples must be (n, r_d, n_b); got ndim={self.samples.ndim}"
            )
        if self.split not in ("train", "test"):
            raise ConfigurationError(f"split must be 'train' or 'test'; got {self.split!r}")
        if not self.name:
            self.name = f"{self.scenario.name}-{self.split}"

    def __len__(self):
        return self.samples.shape[0]


def generate_dataset(cfg, n_samples, dims=DEFAULT_DIMS, split="train", start_index=0,
                     name=""):
    """Generate n_samples truncated angular-delay CSI matrices for a scenario.

    ``start_index`` offsets the per-sample seeds so train/test splits of one
    scenario never share samples.
    """
    cfg.validate(dims)
    samples = np.empty((n_samples, dims.r_d, dims.n_b), dtype=np.complex128)
    for k in range(n_samples):
        samples[k] = to_angular_delay(generate_channel(cfg, start_index + k, dims), dims)
    # storage precision matches the on-disk float32 format, so save/load is exact
    return Dataset(samples=samples.astype(np.complex64), scenario=cfg, split=split,
                   name=name)


def save_dataset(ds, path):
    """Write a dataset directory: manifest.json + raw float32 data.bin."""
    os.makedirs(path, exist_ok=True)
    n, r_d, n_b = ds.samples.shape
    interleaved = np.empty((n, r_d, n_b, 2), dtype=np.float32)
    interleaved[..., 0] = ds.samples.real
    interleaved[..., 1] = ds.samples.imag
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "name": ds.name,
        "split": ds.split,
        "n_samples": int(n),
        "r_d": int(r_d),
        "n_b": int(n_b),
        "dtype": "float32",
        "byte_order": "little-endian",
        "layout": "row-major [n, R_d, N_b, 2] with last axis = (real, imag)",
        "scenario": asdict(ds.scenario),
        "seed": int(ds.scenario.seed),
    }
    if getattr(ds, "augmentation", None) is not None:
        manifest["augmentation"] = ds.augmentation
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
    interleaved.astype("<f4").tofile(os.path.join(path, "data.bin"))


def load_dataset(path):
    """Load a dataset directory written by save_dataset."""
    with open(os.path.join(path, "manifest.json")) as f:
        manifest = json.load(f)
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported dataset format_version: {manifest.get('format_version')}"
        )
    n = manifest["n_samples"]
    r_d = manifest["r_d"]
    n_b = manifest["n_b"]
    raw = np.fromfile(os.path.join(path, "data.bin"), dtype="<f4")
    expected = n * r_d * n_b * 2
    if raw.size != expected:
        raise DatasetFormatError(
            f"data.bin holds {raw.size} float32 values, manifest expects {expected}"
        )
    raw = raw.reshape(n, r_d, n_b, 2)
    samples = (raw[..., 0] + 1j * raw[..., 1]).astype(np.complex64)
    scenario = ScenarioConfig(**manifest["scenario"])
    ds = Dataset(samples=samples, scenario=scenario, split=manifest["split"],
                 name=manifest["name"])
    if "augmentation" in manifest:
        ds.augmentation = manifest["augmentation"]
    return ds
