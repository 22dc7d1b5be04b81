"""Model-driven CSI data augmentation.

Two physically motivated transforms expand a small measurement set:
magnitude shifting in the angular-delay domain (circular on the angular
axis, truncated with zero fill on the delay axis) imitates nearby UE
positions, and per-delay-row random phase shifts imitate phase changes of
paths arriving at the same delay.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .channel import Dataset, DEFAULT_DIMS
from .errors import ConfigurationError


@dataclass
class AugmentConfig:
    angular_shift_range: tuple = (-15, 15)
    delay_shift_range: tuple = (-3, 3)
    use_ads: bool = True
    use_prs: bool = True
    target_size: int = 2000
    seed: int = 0

    def validate(self, dims=DEFAULT_DIMS):
        lo_d, hi_d = self.delay_shift_range
        lo_a, hi_a = self.angular_shift_range
        if lo_d > hi_d or lo_a > hi_a:
            raise ConfigurationError("shift ranges must be (low, high) with low <= high")
        if not (-dims.r_d / 2 < lo_d and hi_d <= dims.r_d / 2):
            raise ConfigurationError(
                f"delay range {self.delay_shift_range} outside (-r_d/2, r_d/2]")
        if not (-dims.n_b / 2 < lo_a and hi_a <= dims.n_b / 2):
            raise ConfigurationError(
                f"angular range {self.angular_shift_range} outside (-n_b/2, n_b/2]")
        if self.target_size < 1:
            raise ConfigurationError(f"target_size must be positive; got {self.target_size}")
        return self


def split_mag_phase(h):
    """Decompose h = mag * exp(j*phase) with phase in (-pi, pi]; zeros get phase 0."""
    h = np.asarray(h, dtype=np.complex128)
    mag = np.abs(h)
    phase = np.angle(h)
    phase[mag == 0] = 0.0
    # np.angle returns [-pi, pi]; fold -pi onto +pi for the (-pi, pi] convention
    phase[phase == -np.pi] = np.pi
    return mag, phase


def magnitude_shift(mag, i, j, dims=None):
    """Shift the magnitude map: circular over angular columns, truncated over
    delay rows (rows shifted past the window are zero-filled).

    out[m, n] = mag[m + i, (n + j) mod n_b] when 0 <= m + i < r_d, else 0.
    """
    mag = np.asarray(mag)
    r_d, n_b = mag.shape
    half_r, half_b = r_d / 2, n_b / 2
    if not (-half_r < i <= half_r):
        raise ValueError(f"delay shift {i} outside (-{half_r}, {half_r}]")
    if not (-half_b < j <= half_b):
        raise ValueError(f"angular shift {j} outside (-{half_b}, {half_b}]")
    out = np.zeros_like(mag)
    m = np.arange(r_d)
    src_rows = m + i
    valid = (src_rows >= 0) & (src_rows < r_d)
    cols = (np.arange(n_b) + j) % n_b
    out[valid] = mag[src_rows[valid]][:, cols]
    return out


def phase_randomize(phase, rng):
    """Subtract one uniform draw theta_m ~ U(0, 2pi) from each delay row,
    wrapping the result back to (-pi, pi]."""
    phase = np.asarray(phase)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(phase.shape[0], 1))
    shifted = phase - theta
    wrapped = np.mod(shifted + np.pi, 2.0 * np.pi) - np.pi
    wrapped[wrapped == -np.pi] = np.pi
    return wrapped


def _recombine(mag, phase):
    return mag * np.exp(1j * phase)


def augment_dataset(base, cfg, dims=DEFAULT_DIMS):
    """Expand a dataset to cfg.target_size samples, deterministic in cfg.seed.

    The shift pool enumerates every (delay, angular) shift of every base
    sample.  A pool smaller than the target is filled by cycling through it
    (plain repetition without PRS; fresh phase draws make the copies
    distinct when PRS is on); a larger pool is subsampled uniformly without
    replacement.
    """
    cfg.validate(dims)
    samples = np.asarray(base.samples)
    n0 = samples.shape[0]
    if n0 == 0:
        raise ConfigurationError("base dataset is empty")
    if cfg.target_size < n0:
        raise ConfigurationError(
            f"target_size {cfg.target_size} smaller than base size {n0}")
    rng = np.random.default_rng(cfg.seed)

    if cfg.use_ads:
        lo_d, hi_d = cfg.delay_shift_range
        lo_a, hi_a = cfg.angular_shift_range
        shifts = [(i, j) for i in range(lo_d, hi_d + 1)
                  for j in range(lo_a, hi_a + 1)]
    else:
        shifts = [(0, 0)]
    pool = [(k, i, j) for k in range(n0) for (i, j) in shifts]

    if len(pool) >= cfg.target_size:
        chosen_idx = np.sort(rng.choice(len(pool), size=cfg.target_size,
                                        replace=False))
        chosen = [pool[q] for q in chosen_idx]
    else:
        reps = -(-cfg.target_size // len(pool))
        chosen = (pool * reps)[: cfg.target_size]

    out = np.empty((cfg.target_size, dims.r_d, dims.n_b), dtype=samples.dtype)
    for q, (k, i, j) in enumerate(chosen):
        if (i, j) == (0, 0) and not cfg.use_prs:
            out[q] = samples[k]  # pure repetition, no decompose/recombine noise
            continue
        mag, phase = split_mag_phase(samples[k])
        if (i, j) != (0, 0):
            mag = magnitude_shift(mag, i, j)
        if cfg.use_prs:
            phase = phase_randomize(phase, rng)
        out[q] = _recombine(mag, phase)

    name = f"{base.name}-aug{cfg.target_size}"
    ds = Dataset(samples=out, scenario=base.scenario, split=base.split, name=name)
    ds.augmentation = {"base_name": base.name, "config": asdict(cfg)}
    return ds
