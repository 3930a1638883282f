"""Symplectic capacities, ball shadows under symplectomorphisms, and
torus quantization.

The linear capacity of an ellipsoid ``sum_j (x_j^2 + p_j^2)/R_j^2 <= 1`` is
``pi R_min^2`` (the area of its smallest conjugate-plane section); the
non-squeezing bound states that the shadow of a transformed ball on any
conjugate plane ``(x_j, p_j)`` keeps at least the area ``pi R^2``.  Shadow
areas are estimated by occupancy-grid rasterization of mapped sample points.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_fill_holes

from .maslov import maslov_loop_index_adaptive
from .polynomials import Polynomial, random_polynomial
from .symplectic import LagrangianFrame, random_symplectic

__all__ = [
    "EllipsoidSpec",
    "TorusSpec",
    "SymplectomorphismSpec",
    "ShadowEstimate",
    "GeneratorCheck",
    "QuantizationReport",
    "UnquantizedTorusError",
    "ellipsoid_capacity",
    "ellipsoid_volume",
    "ball_volume",
    "identity_symplectomorphism",
    "random_symplectomorphism",
    "apply_symplectomorphism",
    "symplectomorphism_jacobian",
    "shadow_area",
    "nonsqueezing_experiment",
    "ground_energy",
    "minimal_orbit_action",
    "loop_action",
    "basis_loop_index",
    "keller_maslov_check",
    "oscillator_levels",
]


@dataclass(frozen=True)
class EllipsoidSpec:
    """Ellipsoid ``sum_j (x_j^2 + p_j^2) / radii_j^2 <= 1`` (radii ascending)."""

    radii: tuple

    def __post_init__(self):
        r = tuple(sorted(float(v) for v in self.radii))
        if len(r) == 0 or r[0] <= 0:
            raise ValueError("radii must be positive")
        object.__setattr__(self, "radii", r)

    @property
    def n(self):
        return len(self.radii)


@dataclass(frozen=True)
class TorusSpec:
    """Product of circles ``x_j^2 + p_j^2 = r_j^2`` times flat line factors."""

    radii: tuple
    flat_dims: int = 0

    def __post_init__(self):
        r = tuple(float(v) for v in self.radii)
        if any(v <= 0 for v in r) or self.flat_dims < 0:
            raise ValueError("circle radii must be positive, flat_dims >= 0")
        object.__setattr__(self, "radii", r)

    @property
    def n(self):
        return len(self.radii) + self.flat_dims


class UnquantizedTorusError(ValueError):
    """Raised when an operation requires a quantized torus."""

    def __init__(self, report):
        super().__init__(f"torus is not quantized: {report}")
        self.report = report


def ellipsoid_capacity(spec):
    """Linear capacity ``pi * R_min^2``."""
    return math.pi * spec.radii[0] ** 2


def ellipsoid_volume(spec):
    """Euclidean volume ``pi^n prod_j R_j^2 / n!``."""
    return math.pi ** spec.n * math.prod(r * r for r in spec.radii) / math.factorial(spec.n)


def ball_volume(n, R):
    """Volume of a ball of radius R in R^{2n}: ``pi^n R^{2n} / n!``.

    For a ball the capacity is ``pi R^2`` and ``Vol = capacity^n / n!``.
    """
    if n < 1 or R <= 0:
        raise ValueError("need n >= 1 and R > 0")
    return math.pi ** n * R ** (2 * n) / math.factorial(n)


@dataclass(frozen=True)
class SymplectomorphismSpec:
    """Composite map: a sequence of exactly symplectic stages.

    Stage kinds: ``("linear", S)`` with ``S`` symplectic,
    ``("xshear", V)`` acting as ``(x, p) -> (x, p + grad V(x))``,
    ``("pshear", T)`` acting as ``(x, p) -> (x + grad T(p), p)``.
    """

    n: int
    stages: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for kind, payload in self.stages:
            if kind == "linear":
                S = np.asarray(payload)
                if S.shape != (2 * self.n, 2 * self.n):
                    raise ValueError("linear stage has wrong shape")
            elif kind in ("xshear", "pshear"):
                if not isinstance(payload, Polynomial) or payload.n != self.n:
                    raise ValueError(f"{kind} stage needs a Polynomial in n variables")
            else:
                raise ValueError(f"unknown stage kind {kind!r}")


def identity_symplectomorphism(n):
    return SymplectomorphismSpec(n, ())


def _tempered_shear_potential(n, rng, strength=0.5, domain_radius=4.0):
    # raw degree-<=4 polynomial with coefficients uniform in [-0.5, 0.5],
    # rescaled so the shear moves points by at most `strength` on the domain
    # the composite maps actually visit; unnormalized cubic/quartic shears
    # cascade into overflow when chained
    poly = random_polynomial(n, rng, degree=4, coeff_range=0.5)
    probe = rng.standard_normal((256, n))
    probe *= domain_radius * rng.random((256, 1)) ** (1.0 / n) / np.linalg.norm(
        probe, axis=1, keepdims=True
    )
    peak = float(np.max(np.linalg.norm(poly.grad(probe), axis=1)))
    if peak > strength:
        poly = Polynomial(n, [(c * strength / peak, e) for c, e in poly.terms])
    return poly


def random_symplectomorphism(n, rng, min_stages=3, max_stages=7):
    """Random composite map: alternating linear stages and shears.

    Linear stages are exponentials of random symplectic-algebra elements;
    shear potentials are random polynomials of degree <= 4 with coefficients
    uniform in [-0.5, 0.5], normalized to bounded shear strength so chained
    stages distort a unit ball visibly without blowing it up.
    """
    n_stages = int(rng.integers(min_stages, max_stages + 1))
    stages = []
    shear_kinds = ["xshear", "pshear"]
    for k in range(n_stages):
        if k % 2 == 0:
            stages.append(("linear", random_symplectic(n, rng, scale=0.35)))
        else:
            kind = shear_kinds[(k // 2) % 2]
            stages.append((kind, _tempered_shear_potential(n, rng)))
    return SymplectomorphismSpec(n, tuple(stages))


def apply_symplectomorphism(f, z):
    """Apply the composite map to points of shape ``(..., 2n)``."""
    z = np.array(z, dtype=float, copy=True)
    n = f.n
    if z.shape[-1] != 2 * n:
        raise ValueError("points have wrong dimension")
    for kind, payload in f.stages:
        if kind == "linear":
            z = z @ np.asarray(payload).T
        elif kind == "xshear":
            z[..., n:] += payload.grad(z[..., :n])
        else:
            z[..., :n] += payload.grad(z[..., n:])
    return z


def symplectomorphism_jacobian(f, z):
    """Jacobian of the composite map at a single point (chain rule)."""
    z = np.asarray(z, dtype=float)
    n = f.n
    J = np.eye(2 * n)
    for kind, payload in f.stages:
        if kind == "linear":
            S = np.asarray(payload)
            z = S @ z
            J = S @ J
        elif kind == "xshear":
            H = payload.hess(z[:n])
            stage = np.eye(2 * n)
            stage[n:, :n] = H
            z = z + np.concatenate([np.zeros(n), payload.grad(z[:n])])
            J = stage @ J
        else:
            H = payload.hess(z[n:])
            stage = np.eye(2 * n)
            stage[:n, n:] = H
            z = z + np.concatenate([payload.grad(z[n:]), np.zeros(n)])
            J = stage @ J
    return J


@dataclass(frozen=True)
class ShadowEstimate:
    """Occupancy-grid area of a projected point cloud."""

    plane: tuple  # (x-index i, p-index j); i == j is a conjugate plane
    area: float
    corrected_area: float  # coverage-corrected area (see shadow_area)
    occupied_cells: int  # cells hit by at least one sample
    grid_cells: int  # occupied cells plus enclosed holes (used for the area)
    singleton_cells: int  # cells hit exactly once (fringe diagnostics)
    doubleton_cells: int  # cells hit exactly twice
    grid_res: int
    samples: int
    seed: int
    bbox: tuple


def _sample_ball(dim, R, center, samples, seed, chunk=262144):
    # per-chunk seeding keeps the stream mergeable and order-independent
    done = 0
    idx = 0
    while done < samples:
        m = min(chunk, samples - done)
        rng = np.random.default_rng((int(seed), idx))
        g = rng.standard_normal((m, dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        radii = R * rng.random(m) ** (1.0 / dim)
        yield center + g * radii[:, None]
        done += m
        idx += 1


def shadow_area(f, R, plane, grid_res=512, samples=1_000_000, seed=0, center=None):
    """Area of the projection of ``f(ball of radius R)`` onto a plane.

    ``plane`` is either an integer ``j`` (conjugate plane ``(x_j, p_j)``) or
    a pair ``(i, j)`` selecting the mixed plane ``(x_i, p_j)``.  Mapped
    sample points are rasterized onto a ``grid_res x grid_res`` occupancy
    grid over their bounding box; the area counts occupied cells plus any
    cells fully enclosed by them (interior cells a finite sample leaves
    empty), never a convex hull -- shadows of nonlinear images need not be
    convex.

    ``corrected_area`` additionally compensates the sparsely sampled fringe:
    where the projected sample density tapers to zero (e.g. the rim of a
    ball's shadow in more than one degree of freedom) plain occupancy
    undercounts, because near-empty boundary cells are connected to the
    exterior and cannot be recovered by hole filling.  The number of cells
    that carry samples but were missed is estimated from the singleton and
    doubleton cell counts via the bias-corrected Chao1 richness formula
    ``F1 (F1 - 1) / (2 (F2 + 1))`` and added to the filled count.
    """
    n = f.n
    if isinstance(plane, (tuple, list)):
        i, j = int(plane[0]), int(plane[1])
    else:
        i = j = int(plane)
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError("plane index out of range")
    if grid_res < 2 or samples < 1 or R <= 0:
        raise ValueError("bad grid/sample/radius parameters")
    if center is None:
        center = np.zeros(2 * n)

    pts = np.empty((samples, 2))
    done = 0
    for block in _sample_ball(2 * n, R, np.asarray(center, dtype=float), samples, seed):
        img = apply_symplectomorphism(f, block)
        pts[done : done + len(block), 0] = img[:, i]
        pts[done : done + len(block), 1] = img[:, n + j]
        done += len(block)

    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    counts, _, _ = np.histogram2d(
        pts[:, 0], pts[:, 1], bins=grid_res, range=[[lo[0], hi[0]], [lo[1], hi[1]]]
    )
    occupied = counts > 0
    filled = binary_fill_holes(occupied)
    cell_area = (span[0] / grid_res) * (span[1] / grid_res)
    f1 = int((counts == 1).sum())
    f2 = int((counts == 2).sum())
    unseen = f1 * (f1 - 1) / (2.0 * (f2 + 1))
    return ShadowEstimate(
        plane=(i, j),
        area=float(filled.sum() * cell_area),
        corrected_area=float((filled.sum() + unseen) * cell_area),
        occupied_cells=int(occupied.sum()),
        grid_cells=int(filled.sum()),
        singleton_cells=f1,
        doubleton_cells=f2,
        grid_res=int(grid_res),
        samples=int(samples),
        seed=int(seed),
        bbox=(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])),
    )


def nonsqueezing_experiment(
    n,
    R=1.0,
    n_maps=200,
    grid_res=512,
    samples=1_000_000,
    seed=0,
    margin=0.05,
    controls=False,
    min_stages=3,
    max_stages=7,
):
    """Shadow areas of transformed balls for a seeded family of maps.

    For each map every conjugate-plane shadow is estimated and its
    coverage-corrected area compared to the bound ``pi R^2 (1 - margin)``;
    with ``controls=True`` the mixed planes ``(x_i, p_j), i != j`` are
    measured as well (reported, never asserted -- the bound genuinely fails
    there).  ``min_stages``/``max_stages`` bound the composition length of
    each random map.
    """
    reference = math.pi * R * R
    maps = []
    for k in range(n_maps):
        rng = np.random.default_rng((int(seed), 7919, k))
        f = random_symplectomorphism(n, rng, min_stages=min_stages, max_stages=max_stages)
        planes = []
        for j in range(n):
            est = shadow_area(
                f, R, j, grid_res=grid_res, samples=samples, seed=seed + 31 * k + j
            )
            planes.append(
                {
                    "plane": f"x{j + 1}p{j + 1}",
                    "area": est.area,
                    "corrected_area": est.corrected_area,
                    "occupied_cells": est.occupied_cells,
                    "grid_cells": est.grid_cells,
                    "pass": bool(est.corrected_area >= reference * (1.0 - margin)),
                }
            )
        entry = {"map": k, "planes": planes}
        if controls:
            ctrl = []
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    est = shadow_area(
                        f, R, (i, j), grid_res=grid_res, samples=samples, seed=seed + 977 * k + 13 * i + j
                    )
                    ctrl.append(
                        {
                            "plane": f"x{i + 1}p{j + 1}",
                            "area": est.area,
                            "corrected_area": est.corrected_area,
                        }
                    )
            entry["controls"] = ctrl
        maps.append(entry)
    conjugate_areas = [p["corrected_area"] for m in maps for p in m["planes"]]
    return {
        "n": n,
        "radius": R,
        "reference_area": reference,
        "margin": margin,
        "grid_res": grid_res,
        "samples": samples,
        "maps": maps,
        "min_conjugate_area": min(conjugate_areas),
        "all_pass": bool(all(p["pass"] for m in maps for p in m["planes"])),
    }


def ground_energy(omegas, hbar):
    """Minimal oscillator energy ``sum_j hbar omega_j / 2``."""
    omegas = np.asarray(omegas, dtype=float)
    if np.any(omegas <= 0) or hbar <= 0:
        raise ValueError("frequencies and hbar must be positive")
    return float(hbar * omegas.sum() / 2)


def minimal_orbit_action(hbar):
    """Smallest positive action of a closed orbit: ``pi hbar`` (half a quantum)."""
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    return math.pi * hbar


def loop_action(torus, mu):
    """Action ``oint p dx`` of a torus loop with winding vector ``mu``.

    Each basis circle bounds area ``pi r_j^2``; circles are oriented so a
    positive winding contributes positive action (the orientation the
    oscillator flow induces: clockwise in each ``(x_j, p_j)`` plane).
    """
    mu = np.asarray(mu, dtype=int)
    if mu.shape != (len(torus.radii),):
        raise ValueError("winding vector must match the number of circle factors")
    return float(sum(m * math.pi * r * r for m, r in zip(mu, torus.radii)))


def basis_loop_index(torus, j):
    """Loop index of the j-th basis circle's tangent loop (always 2)."""
    k = len(torus.radii)
    if not 0 <= j < k:
        raise ValueError("no such circle factor")
    nf = torus.flat_dims

    def frame(t):
        ang = np.zeros(k)
        ang[j] = -t  # clockwise loop, matching the positive-action orientation
        X = np.diag(np.concatenate([-np.sin(ang), np.ones(nf)]))
        P = np.diag(np.concatenate([np.cos(ang), np.zeros(nf)]))
        return LagrangianFrame(X, P)

    return abs(maslov_loop_index_adaptive(frame, 0.0, 2 * np.pi))


@dataclass(frozen=True)
class GeneratorCheck:
    r_squared: float
    action: float
    loop_index: int
    level: int
    residual: float
    passed: bool


@dataclass(frozen=True)
class QuantizationReport:
    generators: tuple
    hbar: float
    tol: float
    passed: bool

    def __bool__(self):
        return self.passed


def keller_maslov_check(torus, hbar, tol=1e-9):
    """Check ``action / (2 pi hbar) - loop_index / 4 in Z`` per basis circle.

    Equivalent to ``r_j^2 = (2 N_j + 1) hbar``; returns a per-generator
    report (flat factors are unconstrained: their loops are trivial).
    """
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    rows = []
    k = len(torus.radii)
    for j in range(k):
        mu = np.zeros(k, dtype=int)
        mu[j] = 1
        action = loop_action(torus, mu)
        m = basis_loop_index(torus, j)
        value = action / (2 * math.pi * hbar) - m / 4.0
        level = int(round(value))
        residual = abs(value - level)
        rows.append(
            GeneratorCheck(
                r_squared=torus.radii[j] ** 2,
                action=action,
                loop_index=m,
                level=level,
                residual=residual,
                passed=bool(residual <= tol and level >= 0),
            )
        )
    return QuantizationReport(
        generators=tuple(rows), hbar=float(hbar), tol=float(tol), passed=all(r.passed for r in rows)
    )


def oscillator_levels(torus, omegas, hbar, tol=1e-9):
    """Energy ``sum_j omega_j (N_j + 1/2) hbar`` of a quantized torus."""
    omegas = np.asarray(omegas, dtype=float)
    if omegas.shape != (len(torus.radii),):
        raise ValueError("need one frequency per circle factor")
    if np.any(omegas <= 0):
        raise ValueError("frequencies must be positive")
    report = keller_maslov_check(torus, hbar, tol=tol)
    if not report.passed:
        raise UnquantizedTorusError(report)
    return float(
        sum(w * (g.level + 0.5) * hbar for w, g in zip(omegas, report.generators))
    )
