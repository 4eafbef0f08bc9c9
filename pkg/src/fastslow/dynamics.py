"""Forward iteration, reference flows, slow-manifold tracking, and the
desk-scale scaling experiments.

The experiments realize the local results near planar singularities: the
two-thirds-power fold exit law, the transcritical exchange-versus-escape
dichotomy with its square-root escape distance, and pitchfork branch
selection.  All orbits are deterministic; every observable is interpolated
linearly between the two iterates straddling the measurement face, which is
the stable choice for discrete orbits whose last interior iterate lands an
eps-dependent distance from the face.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (ConvergenceError, ExperimentError, PreconditionError,
                     StructuralError)
from .jets import JetVector
from .model import FastSlowMapSpec, extended_map_jets, reduced_data
from .singularities import classify_planar_singularity, threshold_lambda

__all__ = [
    "Box",
    "Orbit",
    "ScalingFit",
    "BranchSelection",
    "compile_jet_callable",
    "iterate_map_orbit",
    "integrate_time1",
    "track_slow_manifold",
    "fold_exit_experiment",
    "branch_selection_experiment",
    "fit_powerlaw",
]

# exclusion band around branch-selection thresholds; labels inside the band
# are undefined by design (threshold crossings live in an eps-dependent
# neighbourhood there)
LAMBDA_EXCLUSION_BAND = 0.25
# matching distance for branch labelling, in units of sqrt(eps): the escape
# case approaches the critical fiber at the square-root scale, with margin
D_MATCH_FACTOR = 5.0
DEFAULT_TRANSIENT = 10


@dataclass(frozen=True)
class Box:
    """Axis-aligned region given as (lo, hi) per coordinate."""
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for lo, hi in self.bounds:
            if not lo < hi:
                raise StructuralError(f"empty box side ({lo}, {hi})")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def contains(self, z) -> bool:
        return all(lo <= v <= hi for v, (lo, hi) in zip(z, self.bounds))

    def exit_face(self, z) -> str | None:
        """Label of the (first) violated face, e.g. 'x+' or 'z3-'."""
        names = ("x", "y") if self.dim == 2 else tuple(
            f"z{i + 1}" for i in range(self.dim))
        for name, v, (lo, hi) in zip(names, z, self.bounds):
            if v < lo:
                return f"{name}-"
            if v > hi:
                return f"{name}+"
        return None


@dataclass
class Orbit:
    points: np.ndarray          # (steps+1, n), includes the start point
    eps: float
    exited: bool
    exit_edge: str | None


@dataclass
class ScalingFit:
    """Least-squares line through (log eps, log |observable|)."""
    eps_values: tuple[float, ...]
    observables: tuple[float, ...]
    slope: float
    intercept: float
    r_squared: float
    excluded: tuple[float, ...] = ()


def compile_jet_callable(jets: JetVector):
    """Flatten a jet vector into a fast point evaluator."""
    table = [[(c, idx.exponents) for idx, c in comp.coeffs.items()]
             for comp in jets]

    def evaluate(point) -> np.ndarray:
        out = np.empty(len(table))
        p = tuple(float(v) for v in point)
        for i, terms in enumerate(table):
            acc = 0.0
            for c, exps in terms:
                t = c
                for v, e in zip(p, exps):
                    if e == 1:
                        t *= v
                    elif e:
                        t *= v ** e
                acc += t
            out[i] = acc
        return out

    return evaluate


class _MapRunner:
    """Compiled one-step map in displacement coordinates.

    Steps are refused once the orbit leaves a generous multiple of the trust
    radius: the jets are local and iterating the polynomial extrapolation
    diverges double-exponentially."""

    def __init__(self, spec: FastSlowMapSpec):
        self.spec = spec
        self.base = spec.base_point
        self._cap = 10.0 * spec.tols.trust_radius
        self._eval = compile_jet_callable(
            JetVector(extended_map_jets(spec).components[:spec.n],
                      spec.n + 1, spec.order))

    def step(self, z: np.ndarray, eps: float) -> np.ndarray:
        d = z - self.base
        if not np.all(np.abs(d) <= self._cap):
            raise ExperimentError(
                f"orbit left the expansion region (|z - base| > {self._cap:g}); "
                "the local map is meaningless there")
        return self.base + self._eval(np.append(d, eps))


def iterate_map_orbit(spec: FastSlowMapSpec, z0, eps: float, box: Box,
                      max_steps: int) -> Orbit:
    """Iterate the full map until the orbit leaves the box (the first
    outside point is recorded) or the step cap is reached."""
    if eps < 0:
        raise PreconditionError("eps must be nonnegative")
    z = np.asarray(z0, dtype=float)
    if not box.contains(z):
        raise PreconditionError(f"start point {z} is outside the box")
    runner = _MapRunner(spec)
    pts = [z.copy()]
    for _ in range(max_steps):
        z = runner.step(z, eps)
        pts.append(z.copy())
        if not box.contains(z):
            return Orbit(points=np.array(pts), eps=eps, exited=True,
                         exit_edge=box.exit_face(z))
    return Orbit(points=np.array(pts), eps=eps, exited=False, exit_edge=None)


def integrate_time1(V, z0, rtol: float = 1e-12, atol: float = 1e-12) -> np.ndarray:
    """Reference time-1 state of a vector field (jet vector or callable),
    by adaptive high-order integration."""
    if isinstance(V, JetVector):
        f = compile_jet_callable(V)
    else:
        f = V
    sol = solve_ivp(lambda t, y: f(y), (0.0, 1.0), np.asarray(z0, dtype=float),
                    method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise ConvergenceError(f"time-1 integration failed: {sol.message}")
    return sol.y[:, -1]


# ---------------------------------------------------------------------------
# slow-manifold tracking (planar standard-form specs)


def _seed_on_manifold(spec: FastSlowMapSpec, x_start: float, eps: float,
                      y_guess: float = 0.0) -> np.ndarray:
    """Critical-manifold point over x_start, corrected by eps times the
    reduced vector field."""
    f = spec.f[0]
    base = spec.base_point
    y = float(y_guess)
    for _ in range(80):
        val = f.evaluate([x_start - base[0], y - base[1]])
        if abs(val) <= spec.tols.manifold:
            break
        dy = f.partial(1).evaluate([x_start - base[0], y - base[1]])
        if abs(dy) < 1e-14:
            raise PreconditionError(
                f"cannot solve the fast equation for y over x = {x_start} "
                f"(degenerate branch near y = {y:.3g})")
        y -= val / dy
    else:
        raise ConvergenceError(
            f"manifold seed Newton stalled at |f| = {abs(val):.3g}")
    z = np.array([x_start, y])
    mu = 1.0 + spec.DfN_at(z)[0, 0]
    if abs(mu) >= 1.0:
        raise PreconditionError(
            f"seed branch is not attracting: multiplier {mu:.6g} at x = {x_start}")
    rd = reduced_data(spec, z)
    return z + eps * rd.reduced_field


def track_slow_manifold(spec: FastSlowMapSpec, eps: float, x_start: float,
                        transient: int = DEFAULT_TRANSIENT,
                        max_steps: int = 500_000,
                        stop_x: float | None = None,
                        y_guess: float = 0.0) -> np.ndarray:
    """Iterate from the corrected manifold seed, discard the transient, and
    return the post-transient points as the numerical slow-manifold sample.

    Stops at the first iterate with x > stop_x when given, else after
    max_steps."""
    if spec.n != 2:
        raise PreconditionError("slow-manifold tracking is planar (n = 2)")
    z = _seed_on_manifold(spec, x_start, eps, y_guess)
    runner = _MapRunner(spec)
    for _ in range(transient):
        z = runner.step(z, eps)
    pts = [z.copy()]
    for _ in range(max_steps):
        z = runner.step(z, eps)
        pts.append(z.copy())
        if stop_x is not None and z[0] > stop_x:
            break
    else:
        if stop_x is not None:
            raise ExperimentError(
                f"orbit did not reach x = {stop_x} within {max_steps} steps")
    return np.array(pts)


def fit_powerlaw(eps_values, observables, excluded=()) -> ScalingFit:
    eps_values = tuple(float(e) for e in eps_values)
    observables = tuple(float(o) for o in observables)
    if len(eps_values) < 3:
        raise ExperimentError(
            f"power-law fit needs at least 3 points, got {len(eps_values)}")
    X = np.log(np.asarray(eps_values))
    L = np.log(np.abs(np.asarray(observables)))
    A = np.vstack([X, np.ones_like(X)]).T
    coefs, *_ = np.linalg.lstsq(A, L, rcond=None)
    pred = A @ coefs
    ss_res = float(np.sum((L - pred) ** 2))
    ss_tot = float(np.sum((L - L.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(eps_values=eps_values, observables=observables,
                      slope=float(coefs[0]), intercept=float(coefs[1]),
                      r_squared=r2, excluded=tuple(float(e) for e in excluded))


def _interpolate_crossing(p_in: np.ndarray, p_out: np.ndarray, axis: int,
                          level: float) -> np.ndarray:
    t = (level - p_in[axis]) / (p_out[axis] - p_in[axis])
    return p_in + t * (p_out - p_in)


def fold_exit_experiment(spec: FastSlowMapSpec, rho: float, eps_grid,
                         x_start: float = -0.5,
                         transient: int = DEFAULT_TRANSIENT,
                         step_cap: int = 2_000_000,
                         observable: str = "exit") -> ScalingFit:
    """Track the attracting slow manifold through the fold region for each
    eps and fit the power law of the recorded level against eps.

    ``observable = "exit"`` records the y-value interpolated at the crossing
    of the face x = base + rho (the exit level of the extension).  The
    diagnostic variant ``observable = "fiber"`` records the y-level at the
    crossing of the critical fiber x = base instead; it tracks the leading
    power on coarser eps grids because the exit level carries the slow
    logarithmic correction of the corner analysis.
    """
    cls = classify_planar_singularity(spec)
    if cls.case != "Fold":
        raise PreconditionError(
            f"fold exit experiment needs a fold point, got {cls.case} "
            f"(failed: {'; '.join(cls.failed)})")
    c = cls.coefficients
    if not (c.alpha > 0 and c.g0 < 0 and
            spec.f[0].coefficient((0, 1)) < 0):
        raise PreconditionError(
            "fold orientation must be: fxx > 0, fy < 0, g0 < 0 "
            "(attracting branch on the left, drift toward the fold)")
    if observable not in ("exit", "fiber"):
        raise StructuralError(f"unknown observable {observable!r}")
    level = spec.base_point[0] + (rho if observable == "exit" else 0.0)
    stop = spec.base_point[0] + rho

    runner = _MapRunner(spec)
    eps_ok, values, excluded = [], [], []
    for eps in eps_grid:
        eps = float(eps)
        z = _seed_on_manifold(spec, x_start, eps)
        for _ in range(transient):
            z = runner.step(z, eps)
        crossing = None
        prev = z
        for _ in range(step_cap):
            z = runner.step(prev, eps)
            if crossing is None and prev[0] <= level < z[0]:
                crossing = _interpolate_crossing(prev, z, 0, level)
            if z[0] > stop:
                break
            prev = z
        else:
            excluded.append(eps)
            continue
        if crossing is None:  # stop face reached before the observable level
            crossing = _interpolate_crossing(prev, z, 0, level)
        eps_ok.append(eps)
        values.append(crossing[1] - spec.base_point[1])
    if excluded and not eps_ok:
        raise ExperimentError("no eps value produced an exit within the step cap")
    return fit_powerlaw(eps_ok, values, excluded=excluded)


# ---------------------------------------------------------------------------
# branch selection (transcritical / pitchfork)


@dataclass
class BranchSelection:
    label: str
    exit_point: np.ndarray
    exit_edge: str
    matched_point: np.ndarray | None
    distance: float | None
    d_match: float
    lam: float


def _face_roots(spec: FastSlowMapSpec, exit_point: np.ndarray, axis_fixed: int,
                box: Box) -> list[float]:
    """Real roots of the fast equation restricted to the exit face, inside
    the face segment."""
    f = spec.f[0]
    base = spec.base_point
    fixed_val = exit_point[axis_fixed] - base[axis_fixed]
    free = 1 - axis_fixed
    # univariate coefficients of f with the fixed displacement substituted
    degree = f.order
    poly = np.zeros(degree + 1)
    for idx, c in f.coeffs.items():
        e_fix = idx.exponents[axis_fixed]
        e_free = idx.exponents[free]
        poly[e_free] += c * fixed_val ** e_fix
    coeffs_desc = poly[::-1]
    nz = np.flatnonzero(np.abs(coeffs_desc) > 0)
    if nz.size == 0:
        return []
    roots = np.roots(coeffs_desc[nz[0]:])
    lo, hi = box.bounds[free]
    out = []
    for root in roots:
        if abs(root.imag) > 1e-8:
            continue
        val = root.real + base[free]
        if lo - 1e-9 <= val <= hi + 1e-9:
            out.append(val)
    return sorted(out)


def branch_selection_experiment(spec: FastSlowMapSpec, case: str, eps: float,
                                seed: np.ndarray | None = None,
                                side: str = "plus",
                                box: Box | None = None,
                                transient: int = DEFAULT_TRANSIENT,
                                step_cap: int = 2_000_000) -> BranchSelection:
    """Track the incoming attracting slow manifold through the box and label
    the outcome by which outgoing branch (or fast-escape fiber) the orbit is
    within the matching distance of at exit."""
    cls = classify_planar_singularity(spec)
    if cls.case != case:
        raise PreconditionError(
            f"spec classifies as {cls.case}, experiment asked for {case}")
    lam = threshold_lambda(cls.coefficients)
    lam_crit = 1.0 if case == "Transcritical" else 0.0
    # the threshold decides the outcome except in the pitchfork g0 < 0 case,
    # where both outer manifolds land on the center branch for every lambda
    lam_decides = case == "Transcritical" or cls.coefficients.g0 > 0
    if lam_decides and abs(lam - lam_crit) < LAMBDA_EXCLUSION_BAND:
        raise PreconditionError(
            f"lambda = {lam:.4g} lies inside the exclusion band "
            f"{LAMBDA_EXCLUSION_BAND} around the threshold {lam_crit}; "
            "labels are undefined by design there")
    box = box or Box(((-0.5, 0.5), (-0.4, 0.4)))
    d_match = D_MATCH_FACTOR * math.sqrt(eps)
    base = spec.base_point
    g0 = cls.coefficients.g0

    if seed is None:
        if case == "Transcritical":
            z = np.array([base[0] - 0.35, base[1] - 0.35])
            z = _newton_full(spec, z)
        else:
            if g0 > 0:
                z = np.array([base[0], base[1] - 0.35])
                z = _newton_full(spec, z, freeze_x=True)
            else:
                s = +1.0 if side == "plus" else -1.0
                z = np.array([base[0] + s * 0.35, base[1] + 0.35 ** 2])
                z = _newton_full(spec, z, freeze_x=True)
    else:
        z = np.asarray(seed, dtype=float)

    rd = reduced_data(spec, z)
    if rd.valid:
        z = z + eps * rd.reduced_field
    runner = _MapRunner(spec)
    for _ in range(transient):
        z = runner.step(z, eps)
    orbit = iterate_map_orbit(spec, z, eps, box, max_steps=step_cap)
    if not orbit.exited:
        raise ExperimentError(f"orbit did not leave the box in {step_cap} steps")
    z_exit = orbit.points[-1]
    edge = orbit.exit_edge
    axis_fixed = 0 if edge.startswith(("x", "z1")) else 1
    free = 1 - axis_fixed
    roots = _face_roots(spec, z_exit, axis_fixed, box)
    close = [rt for rt in roots if abs(z_exit[free] - rt) <= d_match]
    if len(close) > 1:
        raise ExperimentError(
            f"ambiguous branch label: exit point {z_exit} is within "
            f"{d_match:.3g} of branches at {close}")

    matched = None
    dist = None
    if close:
        matched = z_exit.copy()
        matched[free] = close[0]
        dist = float(abs(z_exit[free] - close[0]))

    if case == "Transcritical":
        if matched is not None:
            label = "ExchangeOfStability"
        elif abs(z_exit[1] - base[1]) <= d_match and axis_fixed == 0:
            label = "FastEscape"
            matched = np.array([z_exit[0], base[1]])
            dist = float(abs(z_exit[1] - base[1]))
        else:
            raise ExperimentError(
                f"transcritical exit {z_exit} matches neither a branch nor "
                f"the critical fiber within {d_match:.3g}")
    else:
        if matched is None:
            raise ExperimentError(
                f"pitchfork exit {z_exit} is not within {d_match:.3g} of any branch")
        if axis_fixed == 1 and abs(matched[0] - base[0]) <= d_match:
            label = "BothToCenter"
        elif matched[0] > base[0]:
            label = "BranchPlus"
        else:
            label = "BranchMinus"
    return BranchSelection(label=label, exit_point=z_exit, exit_edge=edge,
                           matched_point=matched, distance=dist,
                           d_match=d_match, lam=lam)


def _newton_full(spec: FastSlowMapSpec, guess: np.ndarray,
                 freeze_x: bool = False) -> np.ndarray:
    """Project a guess onto the critical manifold (optionally moving y only)."""
    z = guess.astype(float).copy()
    f = spec.f[0]
    base = spec.base_point
    for _ in range(80):
        d = z - base
        val = f.evaluate(d)
        if abs(val) <= spec.tols.manifold:
            return z
        if freeze_x:
            dy = f.partial(1).evaluate(d)
            if abs(dy) < 1e-12:
                return z  # on a vertical branch (e.g. the center line)
            z[1] -= val / dy
        else:
            grad = np.array([f.partial(0).evaluate(d), f.partial(1).evaluate(d)])
            nrm2 = float(grad @ grad)
            if nrm2 < 1e-20:
                raise PreconditionError("degenerate manifold seed")
            z -= grad * (val / nrm2)
    raise ConvergenceError("branch seed Newton did not converge")
