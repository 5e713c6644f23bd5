"""Forward evolution of the noisy lattice heat recursion

    u_{n+1}(x) = (P u_n)(x) + sigma(u_n(x)) * xi_n(x),

plus the checks that make it trustworthy: the closed-form (one-shot)
representation of u_{n+1}, the contraction diagnostics of the fixed-point
iteration behind existence/uniqueness, support-growth accounting, and the
pathwise comparison/positivity principle.

Resolved-region policy: with sigma(0) = 0 a finitely supported field has
closed dynamics, so evolution is exact on all of Z^d.  With sigma(0) != 0
every lattice site is forced; the caller must supply a bounding box (max-norm
radius) and only sites whose full dependency cone stays inside the box are
resolved, shrinking by the kernel radius per step.  Exactness over silent
truncation.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import LatticeField, Site, max_abs_diff
from .kernels import KernelSlice, WalkKernel, apply_transition, n_step_kernel
from .noise import NoiseModel, NoiseSlice, NoiseStream, sample_slice, slice_values
from .spectral import SpectralProfile, burkholder_constant


class RegionError(RuntimeError):
    """Raised when a step needs noise or field values outside the sampled region."""


class InvariantViolation(RuntimeError):
    """Raised when a structural identity the dynamics must satisfy fails."""


# -- diffusion coefficient ------------------------------------------------------


@dataclass(frozen=True)
class SigmaSpec:
    """Diffusion coefficient sigma with its declared constants.

    lip       optimal Lipschitz constant
    l_lower   inf over z != 0 of |sigma(z)/z|
    sigma0    sigma(0)
    growth / growth_shift   constants with |sigma(z)| <= growth*|z| + growth_shift
    """

    kind: str
    slope: float = 0.0
    offset: float = 0.0
    fn: object = None
    lip: float = 0.0
    l_lower: float = 0.0
    sigma0: float = 0.0
    growth: float = 0.0
    growth_shift: float = 0.0

    def __call__(self, z: float) -> float:
        if self.kind == "linear":
            return self.slope * z
        if self.kind == "affine":
            return self.slope * z + self.offset
        return self.fn(z)


def linear_sigma(nu: float) -> SigmaSpec:
    nu = float(nu)
    if nu < 0.0:
        raise ValueError("slope must be nonnegative")
    return SigmaSpec("linear", slope=nu, lip=nu, l_lower=nu, sigma0=0.0, growth=nu)


def affine_sigma(nu: float, c: float) -> SigmaSpec:
    nu = float(nu)
    c = float(c)
    if nu < 0.0:
        raise ValueError("slope must be nonnegative")
    # |sigma(z)/z| attains 0 at z = -c/nu when c != 0
    l_lower = nu if c == 0.0 else 0.0
    return SigmaSpec("affine", slope=nu, offset=c, lip=nu, l_lower=l_lower,
                     sigma0=c, growth=nu, growth_shift=abs(c))


def custom_sigma(fn, lip: float, l_lower: float = 0.0, growth: float | None = None,
                 growth_shift: float | None = None, check_grid: int = 201) -> SigmaSpec:
    """Wrap a callable with caller-declared constants, spot-checked by sampling.

    Optimal constants of arbitrary callables are not computable; the declared
    values are verified on a grid and trusted beyond it.
    """
    sigma0 = float(fn(0.0))
    growth = lip if growth is None else float(growth)
    growth_shift = abs(sigma0) if growth_shift is None else float(growth_shift)
    zs = np.linspace(-10.0, 10.0, check_grid)
    vals = np.asarray([fn(z) for z in zs], dtype=float)
    slack = 1e-9
    for i in range(len(zs)):
        for j in range(i + 1, len(zs)):
            gap = abs(vals[i] - vals[j])
            if gap > lip * abs(zs[i] - zs[j]) * (1 + slack) + slack:
                raise ValueError(f"declared Lipschitz constant {lip} violated near z={zs[i]:.3g}")
    for z, v in zip(zs, vals):
        if abs(v) + slack < l_lower * abs(z) * (1 - slack):
            raise ValueError(f"declared lower slope {l_lower} violated at z={z:.3g}")
        if abs(v) > growth * abs(z) + growth_shift + slack:
            raise ValueError(f"declared growth bound violated at z={z:.3g}")
    return SigmaSpec("custom", fn=fn, lip=float(lip), l_lower=float(l_lower),
                     sigma0=sigma0, growth=growth, growth_shift=growth_shift)


def make_sigma(spec) -> SigmaSpec:
    """Build a diffusion coefficient from a config mapping."""
    if isinstance(spec, SigmaSpec):
        return spec
    kind = spec.get("kind")
    if kind == "linear":
        return linear_sigma(float(spec["slope"]))
    if kind == "affine":
        return affine_sigma(float(spec["slope"]), float(spec["offset"]))
    raise ValueError(f"unknown sigma kind {kind!r}")


# -- stepping -------------------------------------------------------------------


def _ball_sites(dim: int, radius: int) -> list[Site]:
    return [s for s in itertools.product(range(-radius, radius + 1), repeat=dim)]


def step(u: LatticeField, kernel: WalkKernel, sigma: SigmaSpec,
         noise_slice: NoiseSlice, resolve: list[Site] | None = None) -> LatticeField:
    """One application of the recursion.

    ``resolve=None`` requires sigma(0) = 0 and is exact on the whole lattice;
    otherwise the result is computed exactly on the given sites, which must be
    covered by the noise slice and have their radius-R neighbourhood covered
    by ``u``.
    """
    if u.dim != kernel.dim:
        raise ValueError("field/kernel dimension mismatch")
    table = kernel.table
    vals = noise_slice.values
    if resolve is None:
        if sigma.sigma0 != 0.0:
            raise RegionError(
                "sigma(0) != 0 forces every lattice site; supply a bounding box"
            )
        out: dict[Site, float] = {}
        for z, pz in table.items():
            for y, v in u.items():
                x = tuple(a - b for a, b in zip(y, z))
                out[x] = out.get(x, 0.0) + pz * v
        for y, v in u.items():
            s = sigma(v)
            if s != 0.0:
                if y not in vals:
                    raise RegionError(f"noise slice does not cover site {y}")
                out[y] = out.get(y, 0.0) + s * vals[y]
        return LatticeField(u.dim, out)
    out = {}
    for x in resolve:
        if x not in vals:
            raise RegionError(f"noise slice does not cover resolved site {x}")
        drift = 0.0
        for z, pz in table.items():
            drift += pz * u.value(tuple(a + b for a, b in zip(x, z)))
        out[x] = drift + sigma(u.value(x)) * vals[x]
    return LatticeField(u.dim, out)


@dataclass(frozen=True)
class Trajectory:
    """One realized path u_0..u_{n_max} with the data needed to replay it."""

    kernel: WalkKernel
    sigma: SigmaSpec
    noise: NoiseModel
    stream: NoiseStream
    fields: list[LatticeField]
    box_radius: int | None = None
    resolved_radii: list[int] | None = dc_field(default=None)

    @property
    def n_max(self) -> int:
        return len(self.fields) - 1


def iter_evolution(kernel: WalkKernel, sigma: SigmaSpec, u0: LatticeField,
                   noise: NoiseModel, n_max: int, stream: NoiseStream,
                   box_radius: int | None = None, growth_check: bool = True):
    """Yield (n, u_n) for n = 0..n_max without retaining past fields.

    Each step asserts the sup-norm growth recursion
    ||u_{n+1}|| <= ||u_n||(1 + growth*bound) + growth_shift*bound, a hard
    consequence of the dynamics for bounded noise.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    exact = box_radius is None
    if exact and sigma.sigma0 != 0.0:
        raise RegionError("sigma(0) != 0 requires an explicit box_radius")
    if not exact:
        if u0.support_radius > box_radius:
            raise ValueError("initial support must lie inside the bounding box")
        if box_radius < n_max * kernel.radius:
            raise ValueError(
                "bounding box too small: nothing stays resolved to the horizon"
            )
    u = u0
    yield 0, u
    for n in range(n_max):
        if exact:
            region = list(u.sites())
            resolve = None
        else:
            resolve = _ball_sites(kernel.dim, box_radius - (n + 1) * kernel.radius)
            region = resolve
        noise_slice = sample_slice(noise, n, region, stream)
        u_next = step(u, kernel, sigma, noise_slice, resolve)
        if growth_check:
            ceiling = u.sup_norm * (1.0 + sigma.growth * noise.bound) \
                + sigma.growth_shift * noise.bound
            if u_next.sup_norm > ceiling * (1.0 + 1e-9) + 1e-300:
                raise InvariantViolation(
                    f"sup-norm recursion violated at step {n}: "
                    f"{u_next.sup_norm} > {ceiling}"
                )
        u = u_next
        yield n + 1, u


def evolve(kernel: WalkKernel, sigma: SigmaSpec, u0: LatticeField, noise: NoiseModel,
           n_max: int, seed: int = 0, replica: int = 0,
           box_radius: int | None = None) -> Trajectory:
    """Run the recursion to the horizon; the unique solution is this forward pass."""
    stream = NoiseStream(seed, replica)
    fields = [u for _, u in iter_evolution(kernel, sigma, u0, noise, n_max, stream, box_radius)]
    radii = None
    if box_radius is not None:
        radii = [box_radius - n * kernel.radius for n in range(n_max + 1)]
    return Trajectory(kernel, sigma, noise, stream, fields, box_radius, radii)


# -- closed-form representation check -------------------------------------------


def duhamel_eval(traj: Trajectory, n: int) -> LatticeField:
    """Evaluate u_{n+1} by the one-shot representation

        u_{n+1}(x) = (P^{n+1} u0)(x)
                     + sum_{j=0}^{n} sum_y P^{n-j}_{x,y} sigma(u_j(y)) xi_j(y),

    re-sampling the same noise path.  This is a different evaluation order
    from the forward recursion, so agreement is a real consistency check.
    """
    if not 0 <= n < len(traj.fields) - 1:
        raise ValueError("n must index a step of the trajectory")
    kernel = traj.kernel
    slices = [n_step_kernel(kernel, k) for k in range(n + 2)]

    def smear(slice_: KernelSlice, g: dict[Site, float]) -> dict[Site, float]:
        out: dict[Site, float] = {}
        for z, pz in slice_.table.items():
            for y, v in g.items():
                x = tuple(a - b for a, b in zip(y, z))
                out[x] = out.get(x, 0.0) + pz * v
        return out

    acc = smear(slices[n + 1], traj.fields[0].as_dict())
    for j in range(n + 1):
        u_j = traj.fields[j]
        if traj.box_radius is None:
            region = list(u_j.sites())
        else:
            region = _ball_sites(kernel.dim, traj.box_radius - (j + 1) * kernel.radius)
        xi = sample_slice(traj.noise, j, region, traj.stream).values
        g = {}
        for y in region:
            s = traj.sigma(u_j.value(y))
            if s != 0.0:
                g[y] = s * xi[y]
        for x, v in smear(slices[n - j], g).items():
            acc[x] = acc.get(x, 0.0) + v
    if traj.box_radius is not None:
        keep = set(_ball_sites(kernel.dim, traj.box_radius - (n + 1) * kernel.radius))
        acc = {x: v for x, v in acc.items() if x in keep}
    return LatticeField(kernel.dim, acc)


# -- fixed-point iteration diagnostics -------------------------------------------


@dataclass(frozen=True)
class PicardDiagnostics:
    """Distances between successive iterates of the weighted fixed-point map."""

    lam: float
    p: float
    predicted_factor: float
    distances: np.ndarray
    distance_se: np.ndarray
    ratios: np.ndarray
    ratio_se: np.ndarray
    replicas: int
    batches: int
    n_max: int
    contraction_expected: bool


def picard_solve(kernel: WalkKernel, sigma: SigmaSpec, u0: LatticeField,
                 noise: NoiseModel, n_max: int, lam: float, p: float = 2.0,
                 iterations: int = 6, replicas: int = 400, seed: int = 0,
                 batches: int = 10, profile: SpectralProfile | None = None) -> PicardDiagnostics:
    """Iterate f^(l+1)_{n+1} = P^{n+1} u0 + A f^(l) and measure the weighted
    distances sup_{n,x} lam^-n ||f^(l+1)_n(x) - f^(l)_n(x)||_p by Monte Carlo.

    A is the noise accumulation operator
    (A f)_n(x) = sum_{j<=n} sum_y P^{n-j}_{x,y} sigma(f_j(y)) xi_j(y),
    evaluated by the recursion S_n = P S_{n-1} + sigma(f_n) xi_n.  The norms
    are population quantities, so they are estimated over replicas with batch
    standard errors.  Successive ratios sit next to the theoretical factor
    c_p * lip * sqrt(Upsilon(lam^2)).
    """
    if lam <= 1.0:
        raise ValueError("lambda must exceed 1")
    if sigma.sigma0 != 0.0:
        raise ValueError("fixed-point diagnostics require sigma(0) = 0")
    if iterations < 1 or replicas < batches or batches < 2:
        raise ValueError("need iterations >= 1 and replicas >= batches >= 2")
    prof = profile or SpectralProfile(kernel)
    factor = burkholder_constant(p) * sigma.lip * math.sqrt(prof.upsilon(lam * lam))
    if factor >= 1.0:
        warnings.warn(
            f"predicted contraction factor {factor:.4g} >= 1: no contraction is guaranteed",
            RuntimeWarning,
        )
    drift = [u0.as_dict()]
    for k in range(1, n_max + 1):
        slice_k = n_step_kernel(kernel, k)
        acc: dict[Site, float] = {}
        for z, pz in slice_k.table.items():
            for y, v in u0.items():
                x = tuple(a - b for a, b in zip(y, z))
                acc[x] = acc.get(x, 0.0) + pz * v
        drift.append(acc)

    # accumulated |f^(l+1)_n(x) - f^(l)_n(x)|^p per batch
    batch_acc = [[{} for _ in range(iterations)] for _ in range(batches)]
    per_batch = replicas // batches

    def apply_dict(g: dict[Site, float]) -> dict[Site, float]:
        out: dict[Site, float] = {}
        for z, pz in kernel.table.items():
            for y, v in g.items():
                x = tuple(a - b for a, b in zip(y, z))
                out[x] = out.get(x, 0.0) + pz * v
        return out

    for b in range(batches):
        for r in range(b * per_batch, (b + 1) * per_batch):
            stream = NoiseStream(seed, r)
            prev = [u0.as_dict() for _ in range(n_max + 1)]
            xi_cache: list[dict[Site, float]] = [{} for _ in range(n_max)]

            def xi_at(j: int, site: Site) -> float:
                cache = xi_cache[j]
                if site not in cache:
                    cache.update(sample_slice(noise, j, [site], stream).values)
                return cache[site]

            for level in range(iterations):
                nxt = [u0.as_dict()]
                s_acc: dict[Site, float] = {}
                for n in range(n_max):
                    s_acc = apply_dict(s_acc)
                    for y, v in prev[n].items():
                        sv = sigma(v)
                        if sv != 0.0:
                            s_acc[y] = s_acc.get(y, 0.0) + sv * xi_at(n, y)
                    merged = dict(drift[n + 1])
                    for x, v in s_acc.items():
                        merged[x] = merged.get(x, 0.0) + v
                    nxt.append(merged)
                acc = batch_acc[b][level]
                for n in range(n_max + 1):
                    for x in set(prev[n]) | set(nxt[n]):
                        d = abs(nxt[n].get(x, 0.0) - prev[n].get(x, 0.0))
                        if d != 0.0:
                            key = (n, x)
                            acc[key] = acc.get(key, 0.0) + d**p
                prev = nxt

    dist = np.zeros((batches, iterations))
    for b in range(batches):
        for level in range(iterations):
            worst = 0.0
            for (n, _x), total in batch_acc[b][level].items():
                val = lam ** (-n) * (total / per_batch) ** (1.0 / p)
                if val > worst:
                    worst = val
            dist[b, level] = worst
    distances = dist.mean(axis=0)
    distance_se = dist.std(axis=0, ddof=1) / math.sqrt(batches)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = dist[:, 1:] / dist[:, :-1]
    ratios = np.nanmean(np.where(np.isfinite(raw), raw, np.nan), axis=0)
    ratio_se = np.full(iterations - 1, np.nan)
    for i in range(iterations - 1):
        col = raw[:, i][np.isfinite(raw[:, i])]
        if len(col) >= 2:
            ratio_se[i] = col.std(ddof=1) / math.sqrt(len(col))
        elif len(col) == 1:
            ratio_se[i] = 0.0
    return PicardDiagnostics(lam, p, factor, distances, distance_se, ratios, ratio_se,
                             per_batch * batches, batches, n_max, factor < 1.0)


# -- support accounting -----------------------------------------------------------


def support_metrics(traj: Trajectory) -> list[tuple[int, int, int]]:
    """Per-step (n, support radius, support count).

    With sigma(0) = 0 the radius recursion R_{n+1} <= R_n + R and the exact
    max-norm ball count (2(R_0 + nR) + 1)^d are asserted at every step.
    """
    rows = [(n, f.support_radius, len(f)) for n, f in enumerate(traj.fields)]
    if traj.sigma.sigma0 == 0.0 and traj.box_radius is None:
        r = traj.kernel.radius
        d = traj.kernel.dim
        r0 = traj.fields[0].support_radius
        for n in range(len(rows) - 1):
            if rows[n + 1][1] > rows[n][1] + r:
                raise InvariantViolation(
                    f"support radius jumped by more than {r} at step {n}"
                )
        for n, _radius, count in rows:
            ball = (2 * (r0 + n * r) + 1) ** d
            if count > ball:
                raise InvariantViolation(
                    f"support count {count} exceeds the max-norm ball bound {ball} at step {n}"
                )
    return rows


# -- comparison and positivity ------------------------------------------------------


@dataclass(frozen=True)
class ComparisonReport:
    """Outcome of the pathwise ordering / positivity check."""

    condition_holds: bool
    stay_probability: float
    threshold: float
    paths_checked: int
    ordering_ok: bool
    positivity_ok: bool
    min_margin: float


def check_comparison(kernel: WalkKernel, sigma: SigmaSpec, noise: NoiseModel,
                     u0: LatticeField, v0: LatticeField, n_max: int = 20,
                     paths: int = 100, seed: int = 0) -> ComparisonReport:
    """Verdict on the ordering condition stay-probability >= bound * lip, and,
    when it holds, a paired-path check that u_0 >= v_0 propagates to
    u_n >= v_n (and u_0 >= 0 to u_n >= 0) under the SAME noise path."""
    if u0.dim != v0.dim or u0.dim != kernel.dim:
        raise ValueError("dimension mismatch")
    for site in set(u0.sites()) | set(v0.sites()):
        if u0.value(site) < v0.value(site):
            raise ValueError("initial ordering u0 >= v0 violated")
    threshold = noise.bound * sigma.lip
    condition = kernel.stay_probability >= threshold
    if not condition:
        return ComparisonReport(False, kernel.stay_probability, threshold, 0, False, False, math.nan)
    u0_nonneg = all(v >= 0.0 for _, v in u0.items())
    v0_nonneg = all(v >= 0.0 for _, v in v0.items())
    ordering_ok = True
    positivity_ok = True
    min_margin = math.inf
    for r in range(paths):
        stream = NoiseStream(seed, r)
        iter_u = iter_evolution(kernel, sigma, u0, noise, n_max, stream)
        iter_v = iter_evolution(kernel, sigma, v0, noise, n_max, stream)
        for (_, fu), (_, fv) in zip(iter_u, iter_v):
            for site in set(fu.sites()) | set(fv.sites()):
                margin = fu.value(site) - fv.value(site)
                if margin < min_margin:
                    min_margin = margin
                if margin < 0.0:
                    ordering_ok = False
            if u0_nonneg and any(v < 0.0 for _, v in fu.items()):
                positivity_ok = False
            if v0_nonneg and any(v < 0.0 for _, v in fv.items()):
                positivity_ok = False
    return ComparisonReport(True, kernel.stay_probability, threshold, paths,
                            ordering_ok, positivity_ok, min_margin)
