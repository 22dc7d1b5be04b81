"""UE-side encoder: spherical normalization and linear compression.

The channel matrix is split into its Frobenius norm (a single "power"
scalar) and a unit-norm matrix, which neutralizes path-loss scale before
the trainable measurement matrix compresses the vectorized CSI.  The
feedback payload is the compressed vector plus the power scalar.
"""

from dataclasses import dataclass
import math
import struct

import numpy as np

from .channel import DEFAULT_DIMS
from .errors import DimensionError

ZERO_NORM_EPS = 1e-12

SUPPORTED_CRS = (1 / 4, 1 / 8, 1 / 16, 1 / 32)


def payload_length(cr, n):
    """Compressed vector length: total payload round(cr*n) minus one slot for p."""
    total = round(cr * n)
    if total < 2:
        raise ValueError(f"compression ratio {cr} leaves no room for a payload (n={n})")
    return total - 1


@dataclass
class MeasurementMatrix:
    phi: np.ndarray  # (l_y, n)
    trainable: bool = True

    @classmethod
    def random(cls, cr, n, seed=0, trainable=True):
        """Gaussian init, variance 1/n, shaped for the configured compression ratio."""
        l_y = payload_length(cr, n)
        rng = np.random.default_rng(seed)
        phi = rng.standard_normal((l_y, n)) / math.sqrt(n)
        return cls(phi=phi.astype(np.float32), trainable=trainable)

    @property
    def shape(self):
        return self.phi.shape


@dataclass
class Codeword:
    y: np.ndarray  # real, length l_y
    p: float  # Frobenius norm of the channel matrix


def spherical_split(h):
    """Return (p, h/p) with unit Frobenius norm; the all-zero matrix maps to (0, zeros)."""
    h = np.asarray(h)
    p = float(np.linalg.norm(h))
    if p < ZERO_NORM_EPS:
        return 0.0, np.zeros_like(h)
    return p, h / p


def spherical_merge(p, h_unit):
    if p < 0:
        raise ValueError(f"power must be nonnegative; got {p}")
    return p * np.asarray(h_unit)


def vectorize(h):
    """Stack real parts (row-major) then imaginary parts (row-major)."""
    h = np.asarray(h)
    return np.concatenate([h.real.ravel(), h.imag.ravel()])


def devectorize(x, dims=DEFAULT_DIMS):
    x = np.asarray(x)
    n = dims.csi_vector_len
    if x.shape != (n,):
        raise DimensionError(f"expected vector of length {n}, got shape {x.shape}")
    half = n // 2
    shape = (dims.r_d, dims.n_b)
    return x[:half].reshape(shape) + 1j * x[half:].reshape(shape)


def encode(h, phi):
    """Spherical split, vectorize, compress: the full UE-side pipeline."""
    mat = phi.phi if isinstance(phi, MeasurementMatrix) else np.asarray(phi)
    p, h_unit = spherical_split(h)
    x = vectorize(h_unit)
    if mat.shape[1] != x.shape[0]:
        raise DimensionError(
            f"measurement matrix expects vectors of length {mat.shape[1]}, got {x.shape[0]}"
        )
    return Codeword(y=mat @ x, p=p)


def codeword_to_bytes(c):
    """float32 little-endian: uint32 length, then y, then p."""
    y = np.asarray(c.y, dtype="<f4")
    return struct.pack("<I", y.size) + y.tobytes() + struct.pack("<f", c.p)


def codeword_from_bytes(buf):
    (l_y,) = struct.unpack_from("<I", buf, 0)
    expected = 4 + 4 * l_y + 4
    if len(buf) != expected:
        raise ValueError(f"codeword buffer has {len(buf)} bytes, expected {expected}")
    y = np.frombuffer(buf, dtype="<f4", count=l_y, offset=4).copy()
    (p,) = struct.unpack_from("<f", buf, 4 + 4 * l_y)
    return Codeword(y=y, p=p)
