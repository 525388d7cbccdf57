"""Seedable streams and exact samplers for the base distributions."""

import logging
from typing import Optional, Tuple, Union

import numpy as np

from .models import ParameterDomainError, check_real

logger = logging.getLogger(__name__)

ArrayOrFloat = Union[float, np.ndarray]


class RngStream:
    """Independent random stream keyed by (master_seed, stream_index).

    Child streams extend the key, so every stream in a run is a pure
    function of the master seed and its position in the spawn tree.
    """

    def __init__(self, master_seed: int, stream_index: int = 0, path: Tuple[int, ...] = ()):
        if not isinstance(master_seed, (int, np.integer)) or not 0 <= int(master_seed) < 2**64:
            raise ParameterDomainError(f"master_seed must be a 64-bit unsigned integer, got {master_seed!r}")
        if not isinstance(stream_index, (int, np.integer)) or int(stream_index) < 0:
            raise ParameterDomainError(f"stream_index must be a nonnegative integer, got {stream_index!r}")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self.path = tuple(int(p) for p in path)
        self.seed_sequence = np.random.SeedSequence([self.master_seed, self.stream_index, *self.path])
        self.generator = np.random.Generator(np.random.PCG64(self.seed_sequence))
        self._spawned = 0

    def spawn(self, k: int) -> list:
        """Return k child streams; repeated calls continue the numbering."""
        if k < 0:
            raise ParameterDomainError(f"cannot spawn {k} streams")
        start = self._spawned
        self._spawned += k
        return [RngStream(self.master_seed, self.stream_index, self.path + (start + i,)) for i in range(k)]

    def child(self) -> "RngStream":
        return self.spawn(1)[0]

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index}, path={self.path})"


def _standard_gamma(gen: np.random.Generator, shape: np.ndarray) -> np.ndarray:
    """Unit-rate Gamma draws for an array of shapes >= 0; shape 0 gives 0."""
    shape = np.asarray(shape, dtype=float)
    out = np.zeros(shape.shape)
    small = (shape > 0) & (shape < 1)
    large = shape >= 1
    if large.any():
        out[large] = gen.standard_gamma(shape[large])
    if small.any():
        # Gamma(a) = Gamma(a+1) * U^(1/a), in log space so tiny shapes do not underflow to 0 early
        a = shape[small]
        log_g = np.log(gen.standard_gamma(a + 1.0)) + np.log1p(-gen.random(a.shape)) / a
        out[small] = np.exp(log_g)
    return out


def sample_gamma(stream: RngStream, shape: float, rate: float, size: Optional[int] = None) -> ArrayOrFloat:
    check_real("shape", shape, low=0.0, low_open=True)
    check_real("rate", rate, low=0.0, low_open=True)
    draws = _standard_gamma(stream.generator, np.full(1 if size is None else size, float(shape))) / rate
    return draws if size is not None else float(draws[0])


def sample_poisson(stream: RngStream, mean: float, size: Optional[int] = None) -> Union[int, np.ndarray]:
    check_real("mean", mean, low=0.0)
    if size is None:
        return int(stream.generator.poisson(mean))
    return stream.generator.poisson(mean, size)


def sample_noncentral_chisq(stream: RngStream, dof: float, noncentrality: ArrayOrFloat,
                            size: Optional[int] = None) -> ArrayOrFloat:
    """Poisson-Gamma mixture: K ~ Poisson(nc/2), then Gamma(dof/2 + K, rate 1/2).

    noncentrality may be an array, in which case one draw is made per entry.
    """
    check_real("dof", dof, low=0.0)
    nc = np.asarray(noncentrality, dtype=float)
    if not np.all(np.isfinite(nc)) or np.any(nc < 0):
        raise ParameterDomainError("noncentrality must be finite and nonnegative")
    if nc.ndim == 0 and size is not None:
        nc = np.full(size, float(nc))
    scalar = nc.ndim == 0
    nc = np.atleast_1d(nc)
    k = stream.generator.poisson(nc / 2.0)
    draws = 2.0 * _standard_gamma(stream.generator, dof / 2.0 + k)
    return float(draws[0]) if scalar else draws


def sample_beta(stream: RngStream, a: float, b: float, size: Optional[int] = None) -> ArrayOrFloat:
    check_real("a", a, low=0.0, low_open=True)
    check_real("b", b, low=0.0, low_open=True)
    draws = stream.generator.beta(a, b, 1 if size is None else size)
    return draws if size is not None else float(draws[0])


def sample_exponential(stream: RngStream, rate: float, size: Optional[int] = None) -> ArrayOrFloat:
    check_real("rate", rate, low=0.0, low_open=True)
    draws = stream.generator.standard_exponential(1 if size is None else size) / rate
    return draws if size is not None else float(draws[0])


def sample_uniform(stream: RngStream, size: Optional[int] = None) -> ArrayOrFloat:
    """Uniform on the open interval (0, 1)."""
    draws = stream.generator.random(1 if size is None else size)
    draws = np.where(draws == 0.0, np.nextafter(0.0, 1.0), draws)
    return draws if size is not None else float(draws[0])


def sample_positive_stable(stream: RngStream, index: float, size: Optional[int] = None) -> ArrayOrFloat:
    """Positive stable law with E exp(-qS) = exp(-q^index), via Kanter's representation."""
    a = check_real("index", index, low=0.0, high=1.0, low_open=True, high_open=True)
    n = 1 if size is None else size
    u = np.pi * sample_uniform(stream, n)
    e = stream.generator.standard_exponential(n)
    s = (np.sin(a * u) / np.sin(u) ** (1.0 / a)) * (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)
    return s if size is not None else float(s[0])
