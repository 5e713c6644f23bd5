"""Forcing fields: bounded random noise indexed by (step, site).

Sampling is counter based: the draw at (master seed, replica, step, site) is a
pure function of those integers, obtained by running them through a 64-bit
mixing finalizer.  This makes replicas order independent, safe to sample
concurrently, and bitwise reproducible regardless of how a region is
enumerated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .fields import Site, as_site

WHITE_TOL = 1e-12

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S63 = np.uint64(63)
_S11 = np.uint64(11)
_INV53 = 2.0**-53


def _mix64(h):
    """splitmix64 finalizer; operates on uint64 scalars or arrays."""
    h = (h ^ (h >> _S30)) * _MIX_A
    h = (h ^ (h >> _S27)) * _MIX_B
    return h ^ (h >> _S31)


def _absorb(h, word):
    return _mix64((h + _GOLDEN) ^ word)


def _cell_hash(seed: int, replica: int, step: int, coords: np.ndarray | None):
    """Hash (seed, replica, step[, site coordinates]) to uint64."""
    h = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    h = _absorb(h, np.uint64(replica & 0xFFFFFFFFFFFFFFFF))
    h = _absorb(h, np.uint64(step & 0xFFFFFFFFFFFFFFFF))
    if coords is None:
        return h
    out = np.broadcast_to(h, coords.shape[:1]).copy()
    for axis in range(coords.shape[1]):
        out = _absorb(out, coords[:, axis].astype(np.int64).view(np.uint64))
    return out


@dataclass(frozen=True)
class NoiseModel:
    """Distribution family plus mode, with analytically derived statistics.

    mode 'spacetime' draws independently per (step, site); 'temporal' draws
    once per step and broadcasts over sites; 'constant' is the deterministic
    field equal to ``scale`` everywhere.  ``bound`` is the sup of |values|.
    """

    family: str
    scale: float
    mode: str
    white: bool
    mean: float
    variance: float
    bound: float

    def moment_norm(self, p: float) -> float:
        """Uniform p-norm of a single draw, computed from the law."""
        if p < 1:
            raise ValueError("p must be >= 1")
        if self.family == "rademacher":
            return self.scale
        if self.family == "uniform":
            return self.scale * (1.0 / (p + 1.0)) ** (1.0 / p)
        return abs(self.scale)


def _derive_stats(family: str, scale: float) -> tuple[float, float, float]:
    if family == "rademacher":
        return 0.0, scale * scale, scale
    if family == "uniform":
        return 0.0, scale * scale / 3.0, scale
    if family == "constant":
        return scale, 0.0, abs(scale)
    raise ValueError(f"unknown noise family {family!r}")


def make_noise(family: str, scale: float, mode: str = "spacetime", white: bool | None = None) -> NoiseModel:
    """Validated noise model.

    ``white=True`` asserts mean 0 and variance 1 (within 1e-12) and fails
    loudly otherwise; ``white=None`` infers the flag from the statistics.
    """
    scale = float(scale)
    if family in ("rademacher", "uniform"):
        if scale <= 0.0:
            raise ValueError("scale must be positive")
        if mode not in ("spacetime", "temporal"):
            raise ValueError(f"mode {mode!r} invalid for family {family!r}")
    elif family == "constant":
        mode = "constant"
    else:
        raise ValueError(f"unknown noise family {family!r}")
    mean, variance, bound = _derive_stats(family, scale)
    is_white = mean == 0.0 and abs(variance - 1.0) <= WHITE_TOL
    if white is True and not is_white:
        raise ValueError(
            f"model flagged white must have mean 0 and variance 1; got mean={mean}, variance={variance}"
        )
    return NoiseModel(family, scale, mode, is_white if white is None else bool(white), mean, variance, bound)


def rademacher_noise(scale: float = 1.0, mode: str = "spacetime", white: bool | None = None) -> NoiseModel:
    return make_noise("rademacher", scale, mode, white)


def uniform_noise(half_width: float, mode: str = "spacetime", white: bool | None = None) -> NoiseModel:
    return make_noise("uniform", half_width, mode, white)


def constant_noise(value: float = 1.0) -> NoiseModel:
    return make_noise("constant", value)


def noise_stats(model: NoiseModel, p: float) -> tuple[float, float, float, float]:
    """(mean, variance, sup bound, uniform p-norm) of one draw."""
    return model.mean, model.variance, model.bound, model.moment_norm(p)


@dataclass(frozen=True)
class NoiseStream:
    """Handle identifying one replica's noise path."""

    seed: int
    replica: int = 0


@dataclass(frozen=True)
class NoiseSlice:
    """Sampled values of the forcing at one step over a finite region."""

    step: int
    values: dict[Site, float]


def _map_hashes(model: NoiseModel, h: np.ndarray) -> np.ndarray:
    if model.family == "rademacher":
        return np.where((h >> _S63).astype(bool), model.scale, -model.scale)
    # uniform: take the top 53 bits as a dyadic point of [0, 1)
    u = (h >> _S11).astype(np.float64) * _INV53
    return model.scale * (2.0 * u - 1.0)


def slice_values(model: NoiseModel, n: int, coords: np.ndarray, stream: NoiseStream) -> np.ndarray:
    """Vectorized draws for the sites in ``coords`` (shape (m, d)) at step n."""
    m = coords.shape[0]
    if model.family == "constant":
        return np.full(m, model.scale)
    if model.mode == "temporal":
        h = _cell_hash(stream.seed, stream.replica, n, None)
        value = float(_map_hashes(model, np.asarray([h]))[0])
        return np.full(m, value)
    h = _cell_hash(stream.seed, stream.replica, n, coords)
    return _map_hashes(model, h)


def sample_slice(model: NoiseModel, n: int, region: Iterable, stream: NoiseStream) -> NoiseSlice:
    """Sample the forcing at step n over ``region`` (iterable of sites).

    The value at a site depends only on (seed, replica, n, site), so the
    enumeration order of the region is irrelevant.
    """
    sites = [region_site for region_site in region]
    if not sites:
        return NoiseSlice(n, {})
    dim = len(sites[0]) if not isinstance(sites[0], int) else 1
    sites = [as_site(s, dim) for s in sites]
    coords = np.asarray(sites, dtype=np.int64).reshape(len(sites), dim)
    vals = slice_values(model, n, coords, stream)
    return NoiseSlice(n, {site: float(v) for site, v in zip(sites, vals)})


def temporal_path(model: NoiseModel, n_steps: int, stream: NoiseStream) -> np.ndarray:
    """The shared per-step draws xi_0..xi_{n_steps-1} of a temporal model."""
    if model.mode == "constant":
        return np.full(n_steps, model.scale)
    if model.mode != "temporal":
        raise ValueError("temporal_path requires a temporal or constant model")
    base = _mix64(np.uint64(stream.seed & 0xFFFFFFFFFFFFFFFF))
    base = _absorb(base, np.uint64(stream.replica & 0xFFFFFFFFFFFFFFFF))
    steps = np.arange(n_steps, dtype=np.uint64)
    h = _absorb(np.broadcast_to(base, (n_steps,)).copy(), steps)
    return _map_hashes(model, h)
