"""Finite-range random-walk kernels on Z^d.

A kernel is a one-step transition table ``offset z -> probability``; the walk
is translation invariant, so the probability of stepping from x to y is
``table[y - x]``.  The module provides the transition operator acting on
sparse fields, n-step tables by repeated convolution, the characteristic
function of the increments, and the overlap sequence

    q_k = sum_z (k-step table at z)^2,

which equals the average of |phi|^(2k) over the torus (Plancherel) and drives
every spectral quantity downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .fields import LatticeField, Site, as_site, max_norm

MASS_TOL = 1e-12

# Midpoint-rule resolution per axis for torus integrals; the integrands are
# smooth and periodic so the rule converges spectrally.
DEFAULT_QUAD_POINTS = {1: 4096, 2: 512, 3: 96}


def _validated_table(table: dict, dim: int) -> dict[Site, float]:
    clean: dict[Site, float] = {}
    total = 0.0
    for offset, prob in table.items():
        offset = as_site(offset, dim)
        prob = float(prob)
        if not math.isfinite(prob) or prob < 0.0:
            raise ValueError(f"probability at offset {offset} must be finite and >= 0")
        total += prob
        if prob != 0.0:
            clean[offset] = prob
    if not clean:
        raise ValueError("kernel table has no mass")
    if abs(total - 1.0) > MASS_TOL:
        raise ValueError(f"kernel mass {total!r} deviates from 1 by more than {MASS_TOL}")
    return clean


@dataclass(frozen=True, eq=False)
class WalkKernel:
    """Validated one-step transition table with its max-norm support radius."""

    dim: int
    table: dict[Site, float]
    radius: int = field(init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be a positive integer")
        clean = _validated_table(self.table, self.dim)
        object.__setattr__(self, "table", clean)
        object.__setattr__(self, "radius", max(max_norm(z) for z in clean))

    @property
    def origin(self) -> Site:
        return (0,) * self.dim

    @property
    def stay_probability(self) -> float:
        return self.table.get(self.origin, 0.0)

    def __eq__(self, other):
        if not isinstance(other, WalkKernel):
            return NotImplemented
        return self.dim == other.dim and self.table == other.table

    def __repr__(self) -> str:
        return f"WalkKernel(dim={self.dim}, radius={self.radius}, support={len(self.table)})"


@dataclass(frozen=True, eq=False)
class KernelSlice:
    """n-step transition table z -> probability of net displacement z."""

    dim: int
    steps: int
    table: dict[Site, float]

    def __post_init__(self):
        total = math.fsum(self.table.values())
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"{self.steps}-step table mass {total!r} deviates from 1")
        if any(p < 0.0 for p in self.table.values()):
            raise ValueError("n-step table has negative entries")

    @property
    def radius(self) -> int:
        return max((max_norm(z) for z in self.table), default=0)


def simple_kernel(dim: int) -> WalkKernel:
    """Nearest-neighbour walk: probability 1/(2d) on each unit neighbour."""
    table = {}
    for axis in range(dim):
        for sign in (-1, 1):
            z = [0] * dim
            z[axis] = sign
            table[tuple(z)] = 1.0 / (2 * dim)
    return WalkKernel(dim, table)


def lazy_kernel(dim: int, stay: float) -> WalkKernel:
    """Walk that stays put with probability ``stay`` and otherwise moves to a
    uniformly chosen unit neighbour."""
    stay = float(stay)
    if not 0.0 < stay < 1.0:
        raise ValueError("stay probability must lie in (0, 1)")
    table = {(0,) * dim: stay}
    move = (1.0 - stay) / (2 * dim)
    for axis in range(dim):
        for sign in (-1, 1):
            z = [0] * dim
            z[axis] = sign
            table[tuple(z)] = move
    return WalkKernel(dim, table)


def custom_kernel(table, dim: int | None = None) -> WalkKernel:
    """Kernel from an explicit table; offsets may be ints (d=1), tuples, or
    lists.  ``table`` may also be a list of (offset, probability) pairs."""
    pairs = list(table.items()) if hasattr(table, "items") else [tuple(p) for p in table]
    if not pairs:
        raise ValueError("empty kernel table")
    if dim is None:
        first = pairs[0][0]
        dim = 1 if isinstance(first, int) else len(first)
    return WalkKernel(dim, {as_site(z, dim): p for z, p in pairs})


def make_kernel(spec) -> WalkKernel:
    """Build a kernel from a spec mapping: kind simple/lazy/custom."""
    if isinstance(spec, WalkKernel):
        return spec
    if not hasattr(spec, "get"):
        raise ValueError("kernel spec must be a mapping or a WalkKernel")
    kind = spec.get("kind")
    if kind == "simple":
        return simple_kernel(int(spec.get("dim", 1)))
    if kind == "lazy":
        return lazy_kernel(int(spec.get("dim", 1)), float(spec["stay"]))
    if kind == "custom":
        if "table" not in spec:
            raise ValueError("custom kernel spec needs a 'table'")
        dim = spec.get("dim")
        return custom_kernel(spec["table"], None if dim is None else int(dim))
    raise ValueError(f"unknown kernel kind {kind!r}")


def apply_transition(kernel: WalkKernel, f: LatticeField) -> LatticeField:
    """Transition operator on fields: (Pf)(x) = sum_z table[z] f(x+z)."""
    if f.dim != kernel.dim:
        raise ValueError("field/kernel dimension mismatch")
    out: dict[Site, float] = {}
    for z, pz in kernel.table.items():
        for y, v in f.items():
            x = tuple(a - b for a, b in zip(y, z))
            out[x] = out.get(x, 0.0) + pz * v
    return LatticeField(f.dim, out)


def _table_array(kernel: WalkKernel) -> tuple[np.ndarray, np.ndarray]:
    """Dense array over the support box [-R, R]^d and its lower corner."""
    r = kernel.radius
    shape = (2 * r + 1,) * kernel.dim
    arr = np.zeros(shape)
    for z, p in kernel.table.items():
        arr[tuple(c + r for c in z)] = p
    return arr, np.full(kernel.dim, -r, dtype=np.int64)


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim == 1:
        return np.convolve(a, b)
    return signal.convolve(a, b, mode="full", method="direct")


class KernelPowerIterator:
    """Iteratively convolved n-step tables as dense arrays.

    ``array(n)`` is the n-step table over the box with lower corner
    ``lo(n) = -n*R`` elementwise; entries outside the reachable set are exact
    zeros (products of exact zeros).
    """

    def __init__(self, kernel: WalkKernel):
        self.kernel = kernel
        self._one, self._one_lo = _table_array(kernel)
        delta = np.zeros((1,) * kernel.dim)
        delta[(0,) * kernel.dim] = 1.0
        self._arrays = [delta]

    def array(self, n: int) -> np.ndarray:
        while len(self._arrays) <= n:
            self._arrays.append(_convolve(self._arrays[-1], self._one))
        return self._arrays[n]

    def lo(self, n: int) -> np.ndarray:
        return self._one_lo * n

    def overlap(self, n: int) -> float:
        a = self.array(n)
        return float(np.sum(a * a))


def n_step_kernel(kernel: WalkKernel, n: int) -> KernelSlice:
    """n-fold convolution of the one-step table; n = 0 is the point mass."""
    if n < 0:
        raise ValueError("step count must be nonnegative")
    powers = KernelPowerIterator(kernel)
    arr = powers.array(n)
    lo = powers.lo(n)
    table: dict[Site, float] = {}
    for idx in np.argwhere(arr != 0.0):
        table[tuple(int(i) for i in idx + lo)] = float(arr[tuple(idx)])
    return KernelSlice(kernel.dim, n, table)


def char_function(kernel: WalkKernel, xi) -> complex:
    """Characteristic function of the increments: sum_z e^{i z.xi} table[z]."""
    xi_vec = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi_vec.shape != (kernel.dim,):
        raise ValueError(f"frequency must have length {kernel.dim}")
    total = 0.0 + 0.0j
    for z, p in kernel.table.items():
        total += p * np.exp(1j * float(np.dot(z, xi_vec)))
    return complex(total)


def phi_squared_grid(kernel: WalkKernel, points: int | None = None) -> np.ndarray:
    """|phi|^2 sampled on the midpoint tensor grid of (-pi, pi)^d.

    The midpoint grid never contains the lattice points where |phi| = 1, which
    keeps the integrands of the spectral module finite.
    """
    d = kernel.dim
    if d > 3:
        raise ValueError("torus quadrature is supported for d <= 3")
    n = points or DEFAULT_QUAD_POINTS[d]
    axis = -np.pi + (np.arange(n) + 0.5) * (2.0 * np.pi / n)
    total = np.zeros((n,) * d, dtype=complex)
    for z, p in kernel.table.items():
        phase = np.zeros((n,) * d)
        for ax, coord in enumerate(z):
            if coord:
                shape = [1] * d
                shape[ax] = n
                phase = phase + coord * axis.reshape(shape)
        total += p * np.exp(1j * phase)
    w = np.abs(total) ** 2
    return w.reshape(-1)


def overlap_q(kernel: WalkKernel, k: int, method: str = "convolution") -> float:
    """Overlap q_k = sum_z (k-step table)^2; the return probability after 2k
    steps of the symmetrized difference walk."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if method == "convolution":
        return KernelPowerIterator(kernel).overlap(k)
    if method == "quadrature":
        w = phi_squared_grid(kernel)
        return float(np.mean(w**k))
    raise ValueError(f"unknown overlap method {method!r}")
