"""Semiclassical waveforms on quantized circles, tori, and gradient graphs.

A waveform is the triple (phase, argument index, half-density) living on the
universal cover of a Lagrangian manifold, evaluated as

    psi(z~) = exp(i phi(z~) / hbar) * i**m(z~) * sqrt(rho(z)),

where ``phi`` integrates ``p dx`` along the manifold, ``m`` is the Leray
index of the lifted tangent plane against a reference lift, and ``rho`` is a
nonnegative density coefficient in the manifold parameter.  The supported
manifolds are parameterized circles ``x = r cos(theta), p = r sin(theta)``,
products of such circles with flat line factors, gradient graphs
``p = grad(Phi)(x)``, and Hamiltonian-flow images of any of these.

Conventions
-----------
* The circle/torus parameter increases counterclockwise in each ``(x_j, p_j)``
  plane, so the generator loop carries ``loop_integral = -pi r^2`` and tangent
  loop index ``+2``; quantization checks are orientation-independent because
  the loop integral and the loop index change sign together.
* The canonical index base is the vertical lift ``(I, 0)`` (the momentum
  fibre), matching the position-chart reading of shadows.  The horizontal
  reference lift takes ``arg det w = -pi`` per factor -- the limit of
  graph-plane lifts whose Hessian tends to zero.
* Gradient-graph manifolds use the generating function itself as the cover
  phase (it satisfies ``d phi = p dx`` and fixes the additive constant so
  that position-space formulas read ``exp(i Phi / hbar) * a``); their lifted
  tangent planes carry index 0 against the vertical base on every branch.
"""

import math
from dataclasses import dataclass

import numpy as np

from .capacity import TorusSpec, basis_loop_index, keller_maslov_check, loop_action
from .errors import ConjugatePointError, NumericalError
from .flows import flow_map, flow_path, is_quadratic_family
from .maslov import (
    LagrangianLift,
    deck_act,
    leray_index,
    lift_path_adaptive,
    transport_lift,
    vertical_lift,
)
from .symplectic import LagrangianFrame, PhasePoint, frame_from_souriau, souriau_w

__all__ = [
    "CircleManifold",
    "TorusManifold",
    "GradientGraphManifold",
    "FlowedManifold",
    "CoverPoint",
    "Waveform",
    "Shadow",
    "circle_phase",
    "cover_phase",
    "phase_defect",
    "circle_argument_index",
    "argument_index_on_manifold",
    "sqrt_de_rham",
    "horizontal_base",
    "is_quantized",
    "evolve",
    "deck_covariance_check",
    "shadow",
    "chart_base",
    "chart_index",
    "chart_cocycle",
    "chart_shadow_value",
    "van_vleck_propagate",
    "morse_index",
    "oscillator_spectrum_from_waveforms",
]

_IPOW = (1 + 0j, 1j, -1 + 0j, -1j)


def _ipow(m):
    """``i**m`` for integer ``m``, exact (no float power)."""
    return _IPOW[int(m) % 4]


def horizontal_base(n):
    """Reference lift of the plane ``{p = 0}`` with ``arg det w = -pi`` per factor."""
    return LagrangianLift(-np.eye(n, dtype=complex), -np.pi * n)


def circle_phase(theta, r):
    """Cover phase ``(r^2 / 2)(sin(theta) cos(theta) - theta)`` of the circle.

    The unique primitive of ``p dx = -r^2 sin^2(theta) dtheta`` vanishing at
    ``theta = 0``; one full parameter turn subtracts ``pi r^2``.
    """
    if r <= 0:
        raise ValueError("circle radius must be positive")
    theta = np.asarray(theta, dtype=float)
    value = 0.5 * r * r * (np.sin(theta) * np.cos(theta) - theta)
    return float(value) if value.ndim == 0 else value


def circle_argument_index(theta):
    """Argument index ``floor(theta / pi) + 1`` of the circle's tangent lift."""
    return int(math.floor(float(theta) / math.pi)) + 1


def _coerce_param(theta, dim):
    th = np.asarray(theta, dtype=float).reshape(-1)
    if th.shape != (dim,):
        raise ValueError(f"parameter must have {dim} component(s), got shape {th.shape}")
    return th


@dataclass(frozen=True)
class CircleManifold:
    """The Lagrangian circle ``x = r cos(theta), p = r sin(theta)``."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n(self):
        return 1

    @property
    def param_dim(self):
        return 1

    def reference(self):
        return np.zeros(1)

    def point(self, theta):
        (th,) = _coerce_param(theta, 1)
        r = self.radius
        return np.array([r * math.cos(th), r * math.sin(th)])

    def tangent_frame(self, theta):
        (th,) = _coerce_param(theta, 1)
        return LagrangianFrame([[-math.sin(th)]], [[math.cos(th)]])

    def phase(self, theta):
        (th,) = _coerce_param(theta, 1)
        return circle_phase(th, self.radius)

    def cover_lift(self, theta):
        """Lift of the tangent line: ``w = e^{2 i theta}``, ``alpha = 2 theta``."""
        (th,) = _coerce_param(theta, 1)
        return LagrangianLift([[np.exp(2j * th)]], 2.0 * th)

    def offset(self, z):
        z = np.asarray(z, dtype=float)
        return abs(math.hypot(z[0], z[1]) - self.radius)

    def deck(self, theta, mu):
        """Parameter of ``gamma^mu . z~`` (one full counterclockwise turn per unit)."""
        (th,) = _coerce_param(theta, 1)
        return np.array([th + 2.0 * math.pi * int(mu)])

    def loop_integral(self, mu):
        """``oint p dx`` over the parameter-increasing generator, ``-pi r^2`` per turn."""
        return -math.pi * self.radius**2 * int(mu)

    def loop_index(self, mu):
        """Tangent-lift winding of the generator loop: ``+2`` per turn."""
        return 2 * int(mu)

    def torus(self):
        return TorusSpec((self.radius,))


@dataclass(frozen=True)
class TorusManifold:
    """Product of Lagrangian circles with optional flat ``{p_i = 0}`` line factors.

    The parameter stacks the circle angles first, then the flat positions.
    """

    radii: tuple
    flat_dims: int = 0

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        if not radii or any(r <= 0 for r in radii) or self.flat_dims < 0:
            raise ValueError("need at least one positive radius and flat_dims >= 0")
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "flat_dims", int(self.flat_dims))

    @property
    def n(self):
        return len(self.radii) + self.flat_dims

    @property
    def param_dim(self):
        return self.n

    def _split(self, theta):
        th = _coerce_param(theta, self.param_dim)
        k = len(self.radii)
        return th[:k], th[k:]

    def reference(self):
        return np.zeros(self.param_dim)

    def point(self, theta):
        ang, flat = self._split(theta)
        r = np.asarray(self.radii)
        x = np.concatenate([r * np.cos(ang), flat])
        p = np.concatenate([r * np.sin(ang), np.zeros(self.flat_dims)])
        return np.concatenate([x, p])

    def tangent_frame(self, theta):
        ang, _ = self._split(theta)
        X = np.diag(np.concatenate([-np.sin(ang), np.ones(self.flat_dims)]))
        P = np.diag(np.concatenate([np.cos(ang), np.zeros(self.flat_dims)]))
        return LagrangianFrame(X, P)

    def phase(self, theta):
        ang, _ = self._split(theta)
        return float(sum(circle_phase(a, r) for a, r in zip(ang, self.radii)))

    def cover_lift(self, theta):
        ang, _ = self._split(theta)
        diag = np.concatenate([np.exp(2j * ang), -np.ones(self.flat_dims)])
        alpha = 2.0 * float(np.sum(ang)) - math.pi * self.flat_dims
        return LagrangianLift(np.diag(diag), alpha)

    def offset(self, z):
        z = np.asarray(z, dtype=float)
        n, k = self.n, len(self.radii)
        x, p = z[:n], z[n:]
        circ = np.abs(np.hypot(x[:k], p[:k]) - np.asarray(self.radii))
        flat = np.abs(p[k:])
        return float(np.max(np.concatenate([circ, flat])))

    def deck(self, theta, mu):
        th = _coerce_param(theta, self.param_dim)
        mu = np.asarray(mu, dtype=int)
        if mu.shape != (len(self.radii),):
            raise ValueError("winding vector must match the number of circle factors")
        shift = np.concatenate([2.0 * math.pi * mu, np.zeros(self.flat_dims)])
        return th + shift

    def loop_integral(self, mu):
        mu = np.asarray(mu, dtype=int)
        if mu.shape != (len(self.radii),):
            raise ValueError("winding vector must match the number of circle factors")
        return float(-math.pi * np.sum(mu * np.square(self.radii)))

    def loop_index(self, mu):
        mu = np.asarray(mu, dtype=int)
        if mu.shape != (len(self.radii),):
            raise ValueError("winding vector must match the number of circle factors")
        return int(2 * np.sum(mu))

    def torus(self):
        return TorusSpec(self.radii, self.flat_dims)


@dataclass(frozen=True)
class GradientGraphManifold:
    """The graph ``p = grad(Phi)(x)`` of a potential with value/grad/hess methods.

    Simply connected, hence automatically quantized: every loop is trivial
    and carries index 0.  The cover phase is the generating function ``Phi``
    itself (``d Phi = p dx`` along the graph).
    """

    potential: object

    @property
    def n(self):
        return self.potential.n

    @property
    def param_dim(self):
        return self.potential.n

    def reference(self):
        return np.zeros(self.param_dim)

    def point(self, theta):
        x = _coerce_param(theta, self.param_dim)
        return np.concatenate([x, np.asarray(self.potential.grad(x), dtype=float)])

    def tangent_frame(self, theta):
        x = _coerce_param(theta, self.param_dim)
        return LagrangianFrame(np.eye(self.n), np.asarray(self.potential.hess(x)))

    def phase(self, theta):
        x = _coerce_param(theta, self.param_dim)
        return float(self.potential.value(x))

    def cover_lift(self, theta):
        """Lift with ``alpha = sum_j (2 arctan(lambda_j) - pi)`` over Hessian eigenvalues.

        This is the continuous section of lifts over the (contractible) set of
        graph planes that assigns each one-dimensional factor the line angle
        ``arctan(Phi'') - pi/2`` in ``(-pi, 0)``; its Leray index against the
        vertical base vanishes identically.
        """
        x = _coerce_param(theta, self.param_dim)
        S = np.asarray(self.potential.hess(x), dtype=float)
        w = souriau_w(LagrangianFrame(np.eye(self.n), S))
        alpha = float(np.sum(2.0 * np.arctan(np.linalg.eigvalsh(S)) - math.pi))
        return LagrangianLift(w, alpha)

    def offset(self, z):
        z = np.asarray(z, dtype=float)
        x, p = z[: self.n], z[self.n :]
        return float(np.max(np.abs(p - np.asarray(self.potential.grad(x)))))

    def deck(self, theta, mu):
        if np.any(np.asarray(mu, dtype=int) != 0):
            raise ValueError("gradient graphs are simply connected: no deck generators")
        return _coerce_param(theta, self.param_dim)

    def loop_integral(self, mu):
        self.deck(np.zeros(self.param_dim), mu)
        return 0.0

    def loop_index(self, mu):
        self.deck(np.zeros(self.param_dim), mu)
        return 0


class FlowedManifold:
    """The image of a base manifold under a Hamiltonian flow ``f_{t, t'}``.

    Points keep the *base* parameter (the flow carries labels along), so the
    density coefficient in the parameter is preserved exactly and the deck
    structure is inherited unchanged: Hamiltonian isotopies leave both the
    loop integrals of ``p dx`` (``f* (p dx) - p dx`` is exact) and the integer
    loop indices (homotopy invariance) untouched.  Cover lifts transport the
    base lift along the Jacobian path of the flow, so caustic crossings enter
    through plain index jumps rather than errors.  Nesting is supported: the
    base may itself be a `FlowedManifold`.
    """

    def __init__(self, base, hamiltonian, t_start, t_end, steps=1000):
        if hamiltonian.n != base.n:
            raise ValueError("Hamiltonian and manifold dimensions disagree")
        if steps < 1:
            raise ValueError("steps must be >= 1")
        self.base = base
        self.hamiltonian = hamiltonian
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.steps = int(steps)
        self._cache = {}

    @property
    def n(self):
        return self.base.n

    @property
    def param_dim(self):
        return self.base.param_dim

    def reference(self):
        return self.base.reference()

    def _flow(self, theta):
        th = _coerce_param(theta, self.param_dim)
        key = th.tobytes()
        data = self._cache.get(key)
        if data is None:
            data = flow_path(self.hamiltonian, self.base.point(th),
                             self.t_start, self.t_end, self.steps)
            self._cache[key] = data
        return data

    def point(self, theta):
        return self._flow(theta)[1][-1].copy()

    def jacobian(self, theta):
        return self._flow(theta)[2][-1].copy()

    def action(self, theta):
        """Accumulated ``integral(p dx - H dt)`` along the flow line from the base point."""
        return float(self._flow(theta)[3][-1])

    def tangent_frame(self, theta):
        return self.base.tangent_frame(theta).transformed(self._flow(theta)[2][-1])

    def phase(self, theta):
        return self.base.phase(theta) + self.action(theta)

    def cover_lift(self, theta):
        times, _, jacs, _ = self._flow(theta)
        if len(times) == 1:
            return self.base.cover_lift(theta)
        span = times[-1] - times[0]

        def s_fn(s):
            u = (s - times[0]) / span * (len(times) - 1)
            k = int(np.clip(math.floor(u), 0, len(times) - 2))
            return jacs[k] + (u - k) * (jacs[k + 1] - jacs[k])

        return transport_lift(self.base.cover_lift(theta),
                              self.base.tangent_frame(theta),
                              s_fn, self.t_start, self.t_end)

    def offset(self, z):
        back, _, _ = flow_map(self.hamiltonian, np.asarray(z, dtype=float),
                              self.t_end, self.t_start, self.steps)
        return self.base.offset(back)

    def deck(self, theta, mu):
        return self.base.deck(theta, mu)

    def loop_integral(self, mu):
        return self.base.loop_integral(mu)

    def loop_index(self, mu):
        return self.base.loop_index(mu)


@dataclass(frozen=True)
class CoverPoint:
    """A point of the universal cover: a manifold plus an unwrapped parameter."""

    manifold: object
    theta: np.ndarray

    def __post_init__(self):
        th = _coerce_param(self.theta, self.manifold.param_dim)
        object.__setattr__(self, "theta", th)

    def projection(self):
        return self.manifold.point(self.theta)


def cover_phase(path, manifold, tol=1e-6):
    """Line integral of ``p dx`` along a discretized path on the manifold.

    The trapezoid sum over the polyline; within one homotopy class the value
    is discretization-independent up to quadrature error.  Paths from the
    reference point reproduce the manifold phase up to the reference constant
    (zero for circles and tori, ``Phi(0)`` for gradient graphs).  Points
    farther than ``tol`` from the manifold raise ``ValueError``.
    """
    rows = [z.as_vector() if isinstance(z, PhasePoint) else z for z in path]
    pts = np.asarray(rows, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] != 2 * manifold.n:
        raise ValueError("path must be a sequence of 2n phase-space vectors")
    worst = max(manifold.offset(z) for z in pts)
    if worst > tol:
        raise ValueError(f"path leaves the manifold (offset {worst:.3e} > tol {tol:.1e})")
    n = manifold.n
    x, p = pts[:, :n], pts[:, n:]
    return float(np.sum((p[1:] + p[:-1]) / 2 * np.diff(x, axis=0)))


def phase_defect(manifold, theta, step=1e-5):
    """Finite-difference defect ``|d phi - p dx|`` at a parameter point.

    Central differences of both the phase and the embedding; the invariant
    ``d phi = p dx`` should hold on every supported manifold, including
    flow images.
    """
    th = _coerce_param(theta, manifold.param_dim)
    p = manifold.point(th)[manifold.n :]
    worst = 0.0
    for i in range(manifold.param_dim):
        e = np.zeros_like(th)
        e[i] = step
        dphi = (manifold.phase(th + e) - manifold.phase(th - e)) / (2 * step)
        dx = (manifold.point(th + e) - manifold.point(th - e))[: manifold.n] / (2 * step)
        worst = max(worst, abs(dphi - float(p @ dx)))
    return worst


def _lifted_parameter_path(manifold, theta):
    """Lift the tangent planes along the straight parameter path from the reference."""
    th = _coerce_param(theta, manifold.param_dim)
    ref = manifold.reference()
    alpha0 = manifold.cover_lift(ref).alpha
    span = float(np.linalg.norm(th - ref))
    samples = max(33, 1 + int(8 * span))
    _, lifts = lift_path_adaptive(
        lambda s: manifold.tangent_frame(ref + s * (th - ref)),
        0.0, 1.0, alpha0, init_samples=samples,
    )
    return lifts


def argument_index_on_manifold(zcheck, base, rng=None):
    """Leray index of the lifted tangent plane at a cover point against a base lift.

    Transports the tangent-plane lift along a parameter path from the
    manifold reference (path independence within the homotopy class makes
    the choice immaterial), then evaluates the Leray index.  On the circle
    with the vertical base this reproduces `circle_argument_index`.
    """
    manifold = zcheck.manifold
    lifts = _lifted_parameter_path(manifold, zcheck.theta)
    frames = (manifold.tangent_frame(zcheck.theta), frame_from_souriau(base.w))
    return leray_index(lifts[-1], base, frames=frames, rng=rng)


def sqrt_de_rham(amplitude, zcheck, base, orientation=1):
    """Square root of a de Rham density value: ``i**m * sqrt(amplitude)``.

    ``orientation=+1`` uses the index against ``base`` itself; ``-1`` uses the
    deck-shifted base (the other orientation of the evaluation vector), which
    lowers the exponent by one.
    """
    amplitude = float(amplitude)
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    ref = base if orientation == 1 else deck_act(1, base)
    m = argument_index_on_manifold(zcheck, ref)
    return _ipow(m) * math.sqrt(amplitude)


@dataclass(frozen=True, eq=False)
class Waveform:
    """A semiclassical waveform ``exp(i phase / hbar) * i**index * sqrt(amplitude)``.

    ``amplitude`` is a callable returning the nonnegative density coefficient
    in the manifold parameter; ``phase`` defaults to the manifold phase and
    ``index_base`` to the vertical lift.  Waveforms are immutable; `evolve`
    produces a new value.
    """

    manifold: object
    amplitude: object
    hbar: float
    index_base: LagrangianLift = None
    phase: object = None

    def __post_init__(self):
        if not callable(self.amplitude):
            raise ValueError("amplitude must be callable on the manifold parameter")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        object.__setattr__(self, "hbar", float(self.hbar))
        if self.index_base is None:
            object.__setattr__(self, "index_base", vertical_lift(self.manifold.n))
        if self.phase is None:
            object.__setattr__(self, "phase", self.manifold.phase)
        object.__setattr__(self, "_base_frame", frame_from_souriau(self.index_base.w))

    def index(self, theta):
        """Leray index of the manifold's cover lift against the index base."""
        frames = (self.manifold.tangent_frame(theta), self._base_frame)
        return leray_index(self.manifold.cover_lift(theta), self.index_base,
                           frames=frames)

    def value(self, theta):
        a = float(self.amplitude(theta))
        if a < 0:
            raise ValueError("amplitude must be nonnegative")
        if a == 0:
            return 0j
        phi = float(self.phase(theta))
        return np.exp(1j * phi / self.hbar) * _ipow(self.index(theta)) * math.sqrt(a)

    def values(self, thetas):
        return np.array([self.value(th) for th in thetas], dtype=complex)


def is_quantized(manifold, hbar, tol=1e-9):
    """Whether every generator loop satisfies the half-integer action condition.

    Checks ``action / (2 pi hbar) - loop_index / 4`` for integrality on each
    circle generator; gradient graphs are simply connected and always pass.
    The check is insensitive to loop orientation (action and index flip sign
    together).
    """
    spec = _as_torus(manifold)
    if spec is None:
        return True
    return bool(keller_maslov_check(spec, hbar, tol=tol))


def _as_torus(manifold):
    if isinstance(manifold, TorusSpec):
        return manifold
    if isinstance(manifold, CircleManifold) or isinstance(manifold, TorusManifold):
        return manifold.torus()
    if isinstance(manifold, FlowedManifold):
        return _as_torus(manifold.base)
    if isinstance(manifold, GradientGraphManifold):
        return None
    raise ValueError("unsupported manifold for quantization checks")


def evolve(psi, H, t_start, t_end, steps=1000):
    """Transport a waveform by the Hamiltonian flow over ``[t_start, t_end]``.

    The phase gains the accumulated ``integral(p dx - H dt)`` of each flow
    line, the index follows the transported tangent lift (index jumps at
    caustics), and the density coefficient rides along unchanged in the
    carried parameter -- mass is conserved exactly.  ``t_end == t_start``
    returns ``psi`` itself; compositions agree with the direct map within
    integrator tolerance.
    """
    if t_end == t_start:
        return psi
    manifold = FlowedManifold(psi.manifold, H, t_start, t_end, steps=steps)
    base_phase = psi.phase
    return Waveform(manifold, psi.amplitude, psi.hbar, index_base=psi.index_base,
                    phase=lambda th: float(base_phase(th)) + manifold.action(th))


def deck_covariance_check(psi, theta, mu):
    """Compare ``psi(gamma z~) / psi(z~)`` with the predicted deck factor.

    The factor is ``exp(i (loop_integral / hbar + (pi/2) loop_index))``; it
    equals 1 exactly when the manifold is quantized.
    """
    man = psi.manifold
    base_value = psi.value(theta)
    if base_value == 0:
        raise ValueError("deck covariance needs a nonvanishing amplitude")
    observed = psi.value(man.deck(theta, mu)) / base_value
    predicted = np.exp(1j * (man.loop_integral(mu) / psi.hbar
                             + 0.5 * math.pi * man.loop_index(mu)))
    return {"observed": complex(observed), "predicted": complex(predicted),
            "defect": float(abs(observed - predicted))}


@dataclass(frozen=True)
class Shadow:
    """Position-space samples of a waveform: branch sums with caustic flags."""

    positions: np.ndarray
    values: np.ndarray
    branch_count: np.ndarray
    caustic: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))
        object.__setattr__(self, "branch_count", np.asarray(self.branch_count, dtype=int))
        object.__setattr__(self, "caustic", np.asarray(self.caustic, dtype=bool))


def shadow(psi, x_grid, caustic_tol=1e-8):
    """Sum the waveform's branch contributions over a position grid.

    Each branch contributes ``psi.value(theta_j) * |dtheta/dx|^{1/2}``; on the
    circle the two branches over ``|x| < r`` sit at ``theta = +/- arccos(x/r)``
    (principal sheet) with conversion ``(r^2 - x^2)^{-1/2}``, and grid points
    with ``|x|`` within ``caustic_tol`` of ``r`` are flagged rather than
    evaluated.  Gradient graphs have the single branch ``theta = x`` and no
    caustics, so the shadow is exactly ``exp(i Phi(x) / hbar) * sqrt(a(x))``
    with the default vertical index base.
    """
    x_grid = np.asarray(x_grid, dtype=float).reshape(-1)
    man = psi.manifold
    values = np.zeros(x_grid.shape, dtype=complex)
    branches = np.zeros(x_grid.shape, dtype=int)
    caustic = np.zeros(x_grid.shape, dtype=bool)
    if isinstance(man, GradientGraphManifold):
        if man.n != 1:
            raise ValueError("shadows are one-dimensional: need a graph over the line")
        for k, x in enumerate(x_grid):
            values[k] = psi.value(np.array([x]))
            branches[k] = 1
    elif isinstance(man, CircleManifold):
        r = man.radius
        for k, x in enumerate(x_grid):
            gap = r - abs(x)
            if abs(gap) <= caustic_tol:
                caustic[k] = True
                branches[k] = 2
                values[k] = complex(np.nan, np.nan)
            elif gap < 0:
                branches[k] = 0
            else:
                theta_up = math.acos(x / r)
                conv = (r * r - x * x) ** -0.25
                values[k] = (psi.value(theta_up) + psi.value(-theta_up)) * conv
                branches[k] = 2
    else:
        raise ValueError("shadows support circle and gradient-graph manifolds")
    return Shadow(x_grid, values, branches, caustic)


_CHARTS = ("up", "down", "right", "left")


def chart_base(chart):
    """Index base of a circle chart: vertical for x-charts, horizontal for p-charts."""
    if chart in ("up", "down"):
        return vertical_lift(1)
    if chart in ("right", "left"):
        return horizontal_base(1)
    raise ValueError(f"unknown chart {chart!r}; expected one of {_CHARTS}")


def _require_in_chart(man, theta, chart):
    chart_base(chart)  # validates the name
    (th,) = _coerce_param(theta, 1)
    s, c = math.sin(th), math.cos(th)
    ok = {"up": s > 0, "down": s < 0, "right": c > 0, "left": c < 0}[chart]
    if not ok:
        raise ValueError(f"parameter {th:.6f} lies outside the {chart!r} chart")
    return th, s, c


def chart_index(psi, theta, chart):
    """Leray index of the cover lift against the chart's reference base."""
    base = chart_base(chart)
    frames = (psi.manifold.tangent_frame(theta), frame_from_souriau(base.w))
    return leray_index(psi.manifold.cover_lift(theta), base, frames=frames)


def chart_cocycle(manifold, theta, chart_a, chart_b):
    """Chart-change exponent ``m_a(z~) - m_b(z~)`` (deck-independent on the base)."""
    lift = manifold.cover_lift(theta)
    frame = manifold.tangent_frame(theta)
    out = []
    for chart in (chart_a, chart_b):
        base = chart_base(chart)
        out.append(leray_index(lift, base,
                               frames=(frame, frame_from_souriau(base.w))))
    return out[0] - out[1]


def chart_shadow_value(psi, theta, chart):
    """Shadow contribution of one circle branch computed in a named chart.

    x-charts ("up"/"down") convert the density with ``|dtheta/dx|``; p-charts
    ("right"/"left") compose ``|dtheta/dp|`` with ``|dp/dx|`` along the circle.
    Values in overlapping charts differ by exactly ``i**chart_cocycle``.
    """
    man = psi.manifold
    if not isinstance(man, CircleManifold):
        raise ValueError("chart shadows are defined for circle manifolds")
    th, s, c = _require_in_chart(man, theta, chart)
    if s == 0:
        raise ValueError("position-space conversion is singular at the x-caustic")
    r = man.radius
    if chart in ("up", "down"):
        conv = (1.0 / (r * abs(s))) ** 0.5
    else:
        dtheta_dp = 1.0 / (r * abs(c))
        dp_dx = abs(c / s)
        conv = (dtheta_dp * dp_dx) ** 0.5
    a = float(psi.amplitude(th))
    if a < 0:
        raise ValueError("amplitude must be nonnegative")
    m = chart_index(psi, th, chart)
    return np.exp(1j * float(psi.phase(th)) / psi.hbar) * _ipow(m) * math.sqrt(a) * conv


def _position_blocks(jac, n):
    return jac[:n, :n], jac[:n, n:]


def _scan_for_conjugate_points(dets, det_tol):
    ref = float(np.max(np.abs(dets)))
    if ref == 0:
        raise ConjugatePointError("degenerate projection throughout the window")
    if abs(dets[-1]) <= det_tol * ref:
        raise ConjugatePointError(
            "conjugate point at the requested time; use the multi-branch shadow sum")
    interior = dets[:-1]
    tiny = np.abs(interior[1:]) <= det_tol * ref
    flips = np.sign(interior[1:]) * np.sign(interior[:-1]) < 0
    if np.any(tiny) or np.any(flips) or np.sign(dets[-1]) != np.sign(dets[0]):
        raise ConjugatePointError(
            "conjugate point inside the window; use the multi-branch shadow sum")


def van_vleck_propagate(phi, amplitude, H, t_start, t_end, x_grid, hbar,
                        steps=400, newton_tol=1e-12, max_iter=60, det_tol=1e-10,
                        scan_samples=65):
    """Short-time propagation of graph data ``exp(i phi / hbar) * amplitude``.

    For each grid position the unique source ``x'`` on the initial graph
    ``p = grad(phi)(x')`` is found by damped Newton iteration on the flow's
    position component (seeded from the previous grid point), and the value is

        exp(i (phi(x') + S) / hbar) * amplitude(x') * |det dx/dx'|^{-1/2},

    with ``S`` the flow-line action and ``dx/dx' = A + B Hess(phi)(x')`` from
    the variational Jacobian blocks.  Exact for quadratic generators with
    constant amplitude; a conjugate point at or inside the window raises
    `ConjugatePointError` (the multi-branch sum applies there instead).
    ``phi`` must expose value/grad/hess (e.g. a polynomial).
    """
    n = H.n
    grid = np.asarray(x_grid, dtype=float)
    if grid.ndim == 1 and n == 1:
        grid = grid[:, None]
    if grid.ndim != 2 or grid.shape[1] != n:
        raise ValueError("x_grid must be a sequence of n-dimensional positions")
    if hbar <= 0:
        raise ValueError("hbar must be positive")

    def data_value(xp):
        return np.exp(1j * float(phi.value(xp)) / hbar) * float(amplitude(xp))

    if t_end == t_start:
        return np.array([data_value(x) for x in grid], dtype=complex)

    quadratic = is_quadratic_family(H)
    if quadratic:
        # state-independent blocks: one exact step and one exact time scan
        _, jac_final, _ = flow_map(H, np.zeros(2 * n), t_start, t_end, steps=1)
        _, _, scan_jacs, _ = flow_path(H, np.zeros(2 * n), t_start, t_end,
                                       steps=scan_samples - 1)

    out = np.empty(len(grid), dtype=complex)
    xp = grid[0].copy()
    for k, x in enumerate(grid):
        for it in range(max_iter):
            p0 = np.asarray(phi.grad(xp), dtype=float)
            z0 = np.concatenate([xp, p0])
            if quadratic:
                z1 = jac_final @ z0
                A, B = _position_blocks(jac_final, n)
            else:
                z1, jac, _ = flow_map(H, z0, t_start, t_end, steps)
                A, B = _position_blocks(jac, n)
            resid = z1[:n] - x
            err = float(np.max(np.abs(resid)))
            if err <= newton_tol * max(1.0, float(np.max(np.abs(x)))):
                break
            D = A + B @ np.asarray(phi.hess(xp), dtype=float)
            if abs(np.linalg.det(D)) < det_tol:
                raise ConjugatePointError(
                    "conjugate point at the requested time; "
                    "use the multi-branch shadow sum")
            step_vec = -np.linalg.solve(D, resid)
            lam, moved = 1.0, False
            for _ in range(30):
                trial = xp + lam * step_vec
                pt = np.asarray(phi.grad(trial), dtype=float)
                zt = np.concatenate([trial, pt])
                z1t = (jac_final @ zt if quadratic
                       else flow_map(H, zt, t_start, t_end, steps)[0])
                if float(np.max(np.abs(z1t[:n] - x))) < err:
                    xp, moved = trial, True
                    break
                lam /= 2
            if not moved:
                raise NumericalError("source-point solve stalled; window too wide?")
        else:
            raise NumericalError("source-point solve did not converge")

        hess = np.asarray(phi.hess(xp), dtype=float)
        if quadratic:
            dets = np.array([np.linalg.det(J[:n, :n] + J[:n, n:] @ hess)
                             for J in scan_jacs])
            p0 = np.asarray(phi.grad(xp), dtype=float)
            _, _, action = flow_map(H, np.concatenate([xp, p0]), t_start, t_end, 1)
        else:
            p0 = np.asarray(phi.grad(xp), dtype=float)
            _, _, path_jacs, path_act = flow_path(
                H, np.concatenate([xp, p0]), t_start, t_end, steps)
            dets = np.array([np.linalg.det(J[:n, :n] + J[:n, n:] @ hess)
                             for J in path_jacs])
            action = float(path_act[-1])
        _scan_for_conjugate_points(dets, det_tol)
        out[k] = (np.exp(1j * (float(phi.value(xp)) + action) / hbar)
                  * float(amplitude(xp)) * abs(dets[-1]) ** -0.5)
        if k + 1 < len(grid):
            xp = xp + (grid[k + 1] - x)  # warm start: shift by the grid step
    return out


def morse_index(H, x_start, p_start, t_start, t_end, steps=2000, det_tol=1e-9,
                refine_steps=400, bisections=60):
    """Number of conjugate points strictly inside the trajectory window.

    Counts sign changes of ``det(dx/dp')(s)`` for ``s`` in ``(t_start, t_end)``
    from the variational Jacobian blocks, localizing each crossing by
    bisection.  A conjugate endpoint raises `ConjugatePointError`; an interior
    zero without a sign change raises `NumericalError` (a degenerate tangency
    the sampled count cannot classify).
    """
    n = H.n
    z0 = np.concatenate([np.atleast_1d(np.asarray(x_start, dtype=float)),
                         np.atleast_1d(np.asarray(p_start, dtype=float))])
    if z0.shape != (2 * n,):
        raise ValueError("x_start and p_start must each have length n")
    if t_end <= t_start:
        raise ValueError("need t_end > t_start")
    times, _, jacs, _ = flow_path(H, z0, t_start, t_end, steps)
    dets = np.array([np.linalg.det(J[:n, n:]) for J in jacs])
    scale = float(np.max(np.abs(dets)))
    if scale == 0:
        raise NumericalError("dx/dp' vanished along the whole trajectory")
    if abs(dets[-1]) <= det_tol * scale:
        raise ConjugatePointError("the endpoint is conjugate to the start")

    def det_at(s):
        _, jac, _ = flow_map(H, z0, t_start, s, refine_steps)
        return float(np.linalg.det(jac[:n, n:]))

    # count flips between consecutive clearly-nonzero samples; samples inside
    # the zero band are skipped, and a band whose flanks agree in sign hides
    # either a tangency or a crossing pair the sampling cannot classify
    solid = [k for k in range(1, len(dets)) if abs(dets[k]) > det_tol * scale]
    count = 0
    for ka, kb in zip(solid[:-1], solid[1:]):
        if np.sign(dets[ka]) != np.sign(dets[kb]):
            lo, hi = times[ka], times[kb]
            flo = dets[ka]
            for _ in range(bisections):
                mid = 0.5 * (lo + hi)
                fm = det_at(mid)
                if np.sign(fm) == np.sign(flo):
                    lo, flo = mid, fm
                else:
                    hi = mid
            count += 1
        elif kb - ka > 1:
            raise NumericalError("degenerate near-zero of dx/dp' without a sign change")
    return count


def _ladder_residual(r2, hbar, loop_ind, density_only):
    value = loop_action(TorusSpec((math.sqrt(r2),)), [1]) / (2 * math.pi * hbar)
    if not density_only:
        value -= loop_ind / 4.0
    return abs(value - round(value))


def oscillator_spectrum_from_waveforms(hbar, n_max, density_only=False,
                                       scan_divisions=100, tol=1e-9):
    """Oscillator energies found by scanning circle radii for quantized waveforms.

    Scans ``r^2`` over ``(0, (2 n_max + 2) hbar]`` in steps of
    ``hbar / scan_divisions``, refines every residual minimum of the
    quantization condition, and returns ``E = r^2 / 2`` for each accepted
    radius: the half-integer ladder ``(N + 1/2) hbar``.  ``density_only``
    drops the index correction -- the documented contrast construction that
    instead lands on the integer ladder ``N hbar`` (the ``N = 0`` member
    degenerates to the origin and is unreachable by any circle).
    """
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    # the loop index is a homotopy invariant, identical for every radius
    loop_ind = basis_loop_index(TorusSpec((1.0,)), 0)
    r2_max = (2 * n_max + 2) * hbar
    grid = np.linspace(hbar / scan_divisions, r2_max,
                       scan_divisions * (2 * n_max + 2))
    resid = np.array([_ladder_residual(v, hbar, loop_ind, density_only)
                      for v in grid])

    minima = [k for k in range(len(grid))
              if (k == 0 or resid[k] <= resid[k - 1])
              and (k == len(grid) - 1 or resid[k] <= resid[k + 1])]
    levels = []
    for k in minima:
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, len(grid) - 1)]
        for _ in range(200):
            m1 = lo + (hi - lo) / 3
            m2 = hi - (hi - lo) / 3
            if (_ladder_residual(m1, hbar, loop_ind, density_only)
                    <= _ladder_residual(m2, hbar, loop_ind, density_only)):
                hi = m2
            else:
                lo = m1
        r2 = 0.5 * (lo + hi)
        if _ladder_residual(r2, hbar, loop_ind, density_only) > tol:
            continue
        if not density_only and not keller_maslov_check(
                TorusSpec((math.sqrt(r2),)), hbar, tol=math.sqrt(tol)).passed:
            continue
        if not any(abs(r2 - 2 * e) <= 1e-6 * hbar for e in levels):
            levels.append(r2 / 2)
    levels.sort()
    if len(levels) != n_max + 1:
        raise NumericalError(
            f"radius scan found {len(levels)} quantized levels, expected {n_max + 1}")
    return levels
