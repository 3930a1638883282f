"""Index calculus on the Lagrangian Grassmannian and its universal cover.

A point of the cover is represented by a :class:`LagrangianLift` ``(w, alpha)``
with ``w`` the Souriau image of the plane and ``alpha`` a winding-resolved
argument of ``det w``.  The deck transformation shifts ``alpha`` by ``2 pi``.
The Leray index of a transversal pair is

    m(a, b) = (alpha_a - alpha_b + i Tr Log(-w_a w_b^{-1})) / (2 pi) + n / 2

with the principal logarithm; non-transversal pairs are reduced to the
transversal case through an auxiliary plane and the inertia cocycle.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    BranchCutError,
    IntegralityError,
    NumericalError,
    RefinementError,
    TransversalityError,
)
from .symplectic import (
    LagrangianFrame,
    frame_from_souriau,
    intersection_dim,
    signature,
    souriau_w,
    transversal,
)

__all__ = [
    "LagrangianLift",
    "lift_from_frame",
    "vertical_lift",
    "deck_act",
    "lift_path",
    "lift_path_adaptive",
    "transport_lift",
    "principal_log_trace",
    "leray_index_transversal",
    "inert",
    "leray_index",
    "maslov_loop_index",
    "maslov_loop_index_adaptive",
    "argument_index",
]

_INT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class LagrangianLift:
    """A Lagrangian plane together with a winding-resolved ``arg det w``."""

    w: np.ndarray
    alpha: float

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.w, dtype=complex))
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n(self):
        return self.w.shape[0]

    def det_defect(self):
        """How far ``det w`` is from ``e^{i alpha}`` (0 for a valid lift)."""
        return float(abs(np.linalg.det(self.w) - np.exp(1j * self.alpha)))


def _wrap(angle):
    # wrap to (-pi, pi]
    a = np.mod(angle + np.pi, 2 * np.pi) - np.pi
    if a == -np.pi:
        a = np.pi
    return a


def lift_from_frame(frame, windings=0):
    """Lift of a plane with ``alpha`` = principal ``arg det w`` + ``2 pi k``."""
    w = souriau_w(frame)
    alpha = float(np.angle(np.linalg.det(w))) + 2 * np.pi * windings
    return LagrangianLift(w, alpha)


def vertical_lift(n, windings=0):
    """Lift ``(I, 2 pi k)`` of the vertical plane ``{x = 0}``."""
    return LagrangianLift(np.eye(n, dtype=complex), 2 * np.pi * windings)


def deck_act(k, lift):
    """Deck transformation: shift the winding count by the integer ``k``."""
    return LagrangianLift(lift.w, lift.alpha + 2 * np.pi * int(k))


def lift_path(frames, alpha0, tol=1e-8):
    """Lift a discretely sampled path of planes starting from ``alpha0``.

    ``alpha0`` must be an admissible argument for the first sample.  Each
    consecutive pair must move ``arg det w`` by less than pi, otherwise the
    unwrapping is ambiguous and a :class:`RefinementError` is raised.
    """
    if len(frames) == 0:
        raise ValueError("empty path")
    ws = [souriau_w(f) for f in frames]
    args = [float(np.angle(np.linalg.det(w))) for w in ws]
    if abs(np.exp(1j * args[0]) - np.exp(1j * alpha0)) > tol:
        raise ValueError("alpha0 is not an argument of det w at the first sample")
    lifts = [LagrangianLift(ws[0], alpha0)]
    alpha = float(alpha0)
    for k in range(1, len(ws)):
        d = _wrap(args[k] - args[k - 1])
        if abs(d) >= np.pi - 1e-9:
            raise RefinementError(
                f"step {k}: arg det w moved by {d:+.6f}; refine the sampling"
            )
        alpha += d
        lifts.append(LagrangianLift(ws[k], alpha))
    return lifts


def lift_path_adaptive(
    frame_fn, t0, t1, alpha0, max_step=np.pi / 4, init_samples=33, max_depth=48
):
    """Lift ``t -> frame_fn(t)`` over ``[t0, t1]``, bisecting until each step
    moves ``arg det w`` by less than ``max_step``.

    Bisection only *refines*; windings faster than the initial grid resolves
    would alias away, so ``init_samples`` must sample the path densely enough
    that no initial step moves ``arg det w`` by pi or more.  Returns
    ``(times, lifts)`` at the accepted sample points.
    """

    def arg_of(t):
        w = souriau_w(frame_fn(t))
        return w, float(np.angle(np.linalg.det(w)))

    grid = np.linspace(t0, t1, max(int(init_samples), 2))
    samples = [arg_of(t) for t in grid]
    if abs(np.exp(1j * samples[0][1]) - np.exp(1j * alpha0)) > 1e-8:
        raise ValueError("alpha0 is not an argument of det w at t0")

    times = [grid[0]]
    lifts = [LagrangianLift(samples[0][0], alpha0)]

    def refine(ta, arga, tb, wb, argb, depth):
        d = _wrap(argb - arga)
        if abs(d) < max_step:
            times.append(tb)
            lifts.append(LagrangianLift(wb, lifts[-1].alpha + d))
            return
        if depth >= max_depth:
            raise RefinementError("path refinement exceeded maximum depth")
        tm = 0.5 * (ta + tb)
        wm, argm = arg_of(tm)
        refine(ta, arga, tm, wm, argm, depth + 1)
        refine(tm, argm, tb, wb, argb, depth + 1)

    for k in range(1, len(grid)):
        refine(grid[k - 1], samples[k - 1][1], grid[k], samples[k][0], samples[k][1], 0)
    return np.array(times), lifts


def transport_lift(lift, frame, s_fn, t0=0.0, t1=1.0, max_step=np.pi / 4):
    """Transport a lift along a one-parameter family of symplectic matrices.

    ``frame`` must span the plane of ``lift`` and ``s_fn(t0)`` must fix it
    (typically ``s_fn(t0) = I``); the lifted path starts at ``lift.alpha``.
    """
    if np.max(np.abs(souriau_w(frame) - lift.w)) > 1e-8:
        raise ValueError("frame does not span the plane of the lift")
    _, lifts = lift_path_adaptive(
        lambda t: frame.transformed(s_fn(t)), t0, t1, lift.alpha, max_step=max_step
    )
    return lifts[-1]


def principal_log_trace(M, branch_tol=1e-12):
    """Trace of the principal matrix logarithm via the spectrum.

    Each eigenvalue contributes ``log|lambda| + i arg(lambda)`` with the
    argument in ``(-pi, pi)``; eigenvalues on (or within ``branch_tol`` of)
    the closed negative real axis raise :class:`BranchCutError`.
    """
    lam = np.linalg.eigvals(np.atleast_2d(np.asarray(M, dtype=complex)))
    if np.any(np.abs(lam) <= branch_tol):
        raise BranchCutError("singular matrix has no logarithm")
    ang = np.angle(lam)
    if np.any(np.pi - np.abs(ang) <= branch_tol):
        raise BranchCutError("eigenvalue on the negative real axis")
    return complex(np.sum(np.log(np.abs(lam))) + 1j * np.sum(ang))


def leray_index_transversal(a, b, tol=_INT_TOL):
    """Leray index of a transversal pair of lifts."""
    if a.n != b.n:
        raise ValueError("lifts live in different dimensions")
    if not transversal(a.w, b.w):
        raise TransversalityError("planes are not transversal")
    L = principal_log_trace(-a.w @ b.w.conj().T)
    v = (a.alpha - b.alpha + 1j * L) / (2 * np.pi) + a.n / 2
    if abs(v.imag) > tol or abs(v.real - round(v.real)) > tol:
        raise IntegralityError(f"Leray index landed at {v}, not an integer")
    return int(round(v.real))


def inert(f1, f2, f3):
    """Inertia index of a triple of Lagrangian planes (given as frames).

    Half of ``signature + n + (dim23 - dim13 + dim12)``; the parity identity
    ``signature = n + dim23 - dim13 + dim12  (mod 2)`` makes it an integer.
    """
    sig = signature(f1, f2, f3)
    w1, w2, w3 = (souriau_w(f) for f in (f1, f2, f3))
    ddim = (
        intersection_dim(w2, w3)
        - intersection_dim(w1, w3)
        + intersection_dim(w1, w2)
    )
    total = sig + f1.n + ddim
    if total % 2:
        raise IntegralityError("signature parity identity failed")
    return total // 2


def _random_aux_plane(n, rng):
    # symmetric unitary built from explicit factors, so an exact orthonormal
    # frame comes for free: u = Q e^{i theta/2} Q^T, w = u u^T = Q e^{i theta} Q^T
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    theta = rng.uniform(-np.pi, np.pi, size=n)
    u = (Q * np.exp(0.5j * theta)) @ Q.T
    w = (Q * np.exp(1j * theta)) @ Q.T
    return LagrangianFrame(-u.imag, u.real), w


def _leray_via_auxiliary(a, b, frame_a, frame_b, rng):
    n = a.n
    for _ in range(60):
        frame_c, wc = _random_aux_plane(n, rng)
        if transversal(wc, a.w) and transversal(wc, b.w):
            alpha_c = float(np.mod(np.angle(np.linalg.det(wc)), 2 * np.pi))
            c = LagrangianLift(wc, alpha_c)
            return (
                leray_index_transversal(a, c)
                - leray_index_transversal(b, c)
                + inert(frame_a, frame_b, frame_c)
            )
    raise NumericalError("failed to find an auxiliary transversal plane")


def leray_index(a, b, frames=None, rng=None):
    """Leray index of an arbitrary pair of lifts.

    Transversal pairs use the logarithm formula directly.  Otherwise the
    index is computed through an auxiliary plane transversal to both
    arguments and the inertia cocycle; two independent auxiliary choices are
    evaluated and must agree.  ``frames`` may supply ``(frame_a, frame_b)``
    to skip reconstructing frames from the Souriau images.
    """
    if transversal(a.w, b.w):
        return leray_index_transversal(a, b)
    if frames is None:
        frame_a, frame_b = frame_from_souriau(a.w), frame_from_souriau(b.w)
    else:
        frame_a, frame_b = frames
    if rng is None:
        rng = np.random.default_rng(813970)
    m1 = _leray_via_auxiliary(a, b, frame_a, frame_b, rng)
    m2 = _leray_via_auxiliary(a, b, frame_a, frame_b, rng)
    if m1 != m2:
        raise NumericalError("auxiliary-plane evaluations disagree")
    return m1


def _loop_winding(lifts, closure_defect, tol):
    if closure_defect > 1e-8:
        raise ValueError("path of planes does not close up")
    turns = (lifts[-1].alpha - lifts[0].alpha) / (2 * np.pi)
    if abs(turns - round(turns)) > tol:
        raise IntegralityError(f"loop winding {turns} is not an integer")
    return int(round(turns))


def maslov_loop_index(frames, tol=_INT_TOL):
    """Index of a closed loop of Lagrangian planes (discrete samples).

    The winding number of ``det w`` around the unit circle; even for every
    loop of *oriented* planes (e.g. tangent loops of oriented curves), odd
    values occur only for loops that reverse orientation, such as a half
    turn of a line.
    """
    lifts = lift_path(frames, float(np.angle(np.linalg.det(souriau_w(frames[0])))))
    defect = float(np.max(np.abs(lifts[0].w - lifts[-1].w)))
    return _loop_winding(lifts, defect, tol)


def maslov_loop_index_adaptive(frame_fn, t0, t1, tol=_INT_TOL):
    """Adaptive-refinement variant of :func:`maslov_loop_index`."""
    w0 = souriau_w(frame_fn(t0))
    _, lifts = lift_path_adaptive(
        frame_fn, t0, t1, float(np.angle(np.linalg.det(w0)))
    )
    defect = float(np.max(np.abs(lifts[0].w - lifts[-1].w)))
    return _loop_winding(lifts, defect, tol)


def argument_index(tangent_lifts, base, frames=None, rng=None):
    """Leray index of the endpoint of a lifted tangent path against a base lift."""
    return leray_index(tangent_lifts[-1], base, frames=frames, rng=rng)
