"""Sparse, finitely supported real fields on the integer lattice Z^d."""
from __future__ import annotations

import itertools
import math
from typing import Iterable, Iterator, Mapping

Site = tuple[int, ...]


def as_site(x, dim: int) -> Site:
    """Coerce an offset/site spec (int for d=1, or a sequence) to a tuple."""
    if isinstance(x, int):
        site = (x,)
    else:
        site = tuple(int(c) for c in x)
    if len(site) != dim:
        raise ValueError(f"site {x!r} does not match dimension {dim}")
    return site


def max_norm(site: Site) -> int:
    return max(abs(c) for c in site)


class LatticeField:
    """Finite map site -> value with exact zeros dropped.

    The stored support is the true support: entries exactly equal to 0.0 are
    removed at construction, never thresholded.  The max-norm support radius
    and the sup norm are cached.  Instances are treated as immutable.
    """

    __slots__ = ("dim", "_data", "support_radius", "sup_norm")

    def __init__(self, dim: int, entries: Mapping | Iterable[tuple] = ()):
        if dim < 1:
            raise ValueError("dimension must be a positive integer")
        items = entries.items() if isinstance(entries, Mapping) else entries
        data: dict[Site, float] = {}
        for site, value in items:
            site = as_site(site, dim)
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"non-finite value at site {site}")
            if value != 0.0:
                data[site] = value
        radius = 0
        sup = 0.0
        for site, value in data.items():
            r = max_norm(site)
            if r > radius:
                radius = r
            a = abs(value)
            if a > sup:
                sup = a
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "_data", data)
        object.__setattr__(self, "support_radius", radius)
        object.__setattr__(self, "sup_norm", sup)

    def __setattr__(self, name, value):
        raise AttributeError("LatticeField is immutable")

    def __reduce__(self):
        return (LatticeField, (self.dim, self._data))

    def value(self, site) -> float:
        return self._data.get(as_site(site, self.dim), 0.0)

    def items(self):
        return self._data.items()

    def sites(self):
        return self._data.keys()

    def as_dict(self) -> dict[Site, float]:
        return dict(self._data)

    def sorted_items(self) -> list[tuple[Site, float]]:
        return sorted(self._data.items())

    def total(self) -> float:
        return math.fsum(self._data.values())

    def __len__(self) -> int:
        return len(self._data)

    def __iter__(self) -> Iterator[Site]:
        return iter(self._data)

    def __contains__(self, site) -> bool:
        return as_site(site, self.dim) in self._data

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatticeField):
            return NotImplemented
        return self.dim == other.dim and self._data == other._data

    def __repr__(self) -> str:
        return f"LatticeField(dim={self.dim}, support={len(self._data)}, sup={self.sup_norm:g})"


def delta_field(dim: int, mass: float = 1.0) -> LatticeField:
    """Point mass at the origin."""
    return LatticeField(dim, {(0,) * dim: mass})


def box_field(dim: int, value: float, radius: int) -> LatticeField:
    """Constant value on the closed max-norm ball of the given radius."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    sites = itertools.product(range(-radius, radius + 1), repeat=dim)
    return LatticeField(dim, ((s, value) for s in sites))


def max_abs_diff(a: LatticeField, b: LatticeField) -> float:
    """Sitewise sup distance between two fields."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    worst = 0.0
    for site in set(a.sites()) | set(b.sites()):
        d = abs(a.value(site) - b.value(site))
        if d > worst:
            worst = d
    return worst
