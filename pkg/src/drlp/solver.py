"""Minimization of piecewise-linear ReLU networks by vertex pivoting.

The solver walks the polyhedral complex a network induces on its input
space.  It first rides descent directions until enough hyperplanes are
active to pin a vertex, then repeatedly either pivots along the one
feasible edge whose directional derivative is most negative, or, when no
edge descends, certifies the vertex by checking the edges of every
adjacent region reachable by flipping one active unit.  A quadratic
add-on objective is supported through an active-set variant that slides
along walls instead of hopping between vertices.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .network import (
    ActivationPattern,
    PairGroups,
    ReluNetwork,
    activation_pattern,
    critical_indices,
    evaluate,
    flip,
    gradient,
    oriented_normal,
)
from .primitives import (
    AdvanceResult,
    Degenerate,
    DependentColumn,
    PseudoInverse,
    add_axis,
    advance_max,
    argument_residuals,
    project,
    remove_pseudorow,
    update_axis_new_region,
)

LOCAL_MINIMUM = "LocalMinimum"
UNBOUNDED = "Unbounded"
NON_REGULAR = "NonRegular"
STEP_LIMIT = "StepLimit"

_HUGE_T = 1e15


@dataclass
class SolverOptions:
    """Tolerances and limits. All zero/descent tests are relative to local scale."""

    zero_tol: float = 1e-9
    dep_tol: float = 1e-8
    descent_tol: float = 1e-9
    step_accept_tol: float = 1e-9     # how negative a crossing step may be
    drift_refresh_tol: float = 1e-9   # wall residual that forces a dense rebuild
    resync_tol: float = 1e-5          # how stale a pattern bit may be and still be repaired
    max_steps: int = 10_000
    position_correction_every: int = 1   # pivots between wall re-projections (0 = off)
    axis_refresh_every: int = 64         # pivots between full pseudoinverse rebuilds (0 = off)
    seed: int = 0
    rng: np.random.Generator | None = None
    collect_trace: bool = True
    on_record: object = None             # callable(TraceRecord), e.g. a JSONL writer

    def make_rng(self) -> np.random.Generator:
        if self.rng is not None:
            return self.rng
        # counter-based generator so runs are reproducible across platforms
        return np.random.Generator(np.random.Philox(self.seed))


@dataclass
class TraceRecord:
    step: int
    phase: str          # find_vertex | pivot | flip | certify | correct | resync
    x: tuple
    f: float
    neuron: tuple | None = None
    t: float | None = None
    alpha: float | None = None


@dataclass
class SolveOutcome:
    status: str         # LocalMinimum | Unbounded | NonRegular | StepLimit
    x: np.ndarray
    f: float
    steps: int
    wall_ms: float = 0.0
    direction: np.ndarray | None = None   # certified descent ray when Unbounded
    neurons: list | None = None           # diagnostic units when NonRegular
    trace: list = field(default_factory=list)


@dataclass
class SolverState:
    net: ReluNetwork
    x: np.ndarray
    s: ActivationPattern
    pinv: PseudoInverse
    options: SolverOptions
    pairs: PairGroups | None = None
    rng: np.random.Generator = None
    objective: object = None            # callable(x) -> float; network value by default
    steps: int = 0
    pivots: int = 0
    trace: list = field(default_factory=list)

    def value(self, x=None) -> float:
        x = self.x if x is None else x
        if self.objective is not None:
            return self.objective(x)
        return evaluate(self.net, x)

    def emit(self, phase, neuron=None, t=None, alpha=None):
        rec = TraceRecord(
            step=self.steps,
            phase=phase,
            x=tuple(float(v) for v in self.x),
            f=self.value(),
            neuron=tuple(neuron) if neuron is not None else None,
            t=None if t is None else float(t),
            alpha=None if alpha is None else float(alpha),
        )
        if self.options.collect_trace:
            self.trace.append(rec)
        if self.options.on_record is not None:
            self.options.on_record(rec)

    def finish(self, status, **kw) -> SolveOutcome:
        return SolveOutcome(
            status=status,
            x=self.x.copy(),
            f=self.value(),
            steps=self.steps,
            trace=self.trace,
            **kw,
        )


def _pattern_with_valid_pairs(net, x, pairs) -> ActivationPattern:
    # an argument exactly on a paired wall gives both members bit 0; repair
    # to the complementary convention (representative active)
    s = activation_pattern(net, x)
    if pairs is not None:
        for a, b in pairs.pairs:
            if s.get(a) == s.get(b):
                s.bits[s.flat_index(a)] = 1
                s.bits[s.flat_index(b)] = 0
    return s


def initialize(net: ReluNetwork, x0, options: SolverOptions | None = None,
               pairs: PairGroups | None = None) -> SolverState:
    """Solver state at x0, nudged off any hyperplane it happens to sit on.

    Only units whose normals are nonzero force a nudge; units with
    constant zero arguments can never separate regions and keep bit 0.
    """
    options = options or SolverOptions()
    rng = options.make_rng()
    x = np.asarray(x0, dtype=np.float64).copy()
    if x.shape != (net.input_dim,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({net.input_dim},)")
    for _ in range(100):
        s = _pattern_with_valid_pairs(net, x, pairs)
        if not critical_indices(net, s, x, options.zero_tol):
            break
        step = rng.standard_normal(net.input_dim)
        step /= np.linalg.norm(step)
        x = x + 1e-7 * (1.0 + np.max(np.abs(x))) * step
    else:
        raise ValueError("could not nudge the start point off all hyperplanes")
    if pairs is not None:
        pairs.check_pattern(s)
    return SolverState(
        net=net, x=x, s=s, pinv=PseudoInverse.empty(net.input_dim),
        options=options, pairs=pairs, rng=rng,
    )


def choose_axis(pinv: PseudoInverse, grad: np.ndarray):
    """Feasible edge with the most negative normalized directional derivative.

    Returns (row, alpha, i): the chosen pseudoinverse row, its derivative
    <grad, row>/|row|, and its index.  alpha < 0 means f descends along it.
    """
    norms = np.linalg.norm(pinv.matrix, axis=1)
    vals = (pinv.matrix @ grad) / norms
    i = int(np.argmin(vals))
    return pinv.matrix[i].copy(), float(vals[i]), i


def position_correction(state: SolverState) -> float:
    """Re-project x onto the intersection of the tracked walls.

    Solves for the displacement that zeroes every owner's argument; exact
    up to roundoff because arguments are affine on the region.  Returns the
    largest residual found before correcting, a drift measure for callers.
    """
    if state.pinv.m == 0:
        return 0.0
    r = argument_residuals(state.pinv, state.net, state.s, state.x)
    signs = np.array([1.0 if state.s.get(c) == 1 else -1.0 for c in state.pinv.owners])
    delta = state.pinv.matrix.T @ (-signs * r)
    state.x = state.x + delta
    if np.linalg.norm(delta) > 1e-13 * (1.0 + np.linalg.norm(state.x)):
        state.emit("correct")
    return float(np.max(np.abs(r)))


def refresh_pseudoinverse(state: SolverState):
    """Rebuild the pseudoinverse from scratch for the current owners.

    O(n^3) dense solve; used periodically to stop drift from the rank-one
    updates.  Raises Degenerate when the tracked normals lost independence.
    """
    if state.pinv.m == 0:
        return
    cols = np.stack(
        [oriented_normal(state.net, state.s, c) for c in state.pinv.owners], axis=1
    )
    sv = np.linalg.svd(cols, compute_uv=False)
    if sv[-1] <= state.options.dep_tol * sv[0]:
        raise Degenerate("tracked normals are no longer independent")
    state.pinv = PseudoInverse(np.linalg.pinv(cols, rcond=1e-13), list(state.pinv.owners))


def find_vertex(state: SolverState) -> SolveOutcome | None:
    """Ride descent directions until input_dim independent walls are active.

    Follows the projected negative gradient; when that vanishes inside the
    remaining free subspace, falls back to random directions with the
    ascending sign removed, so the objective never increases.  Returns an
    outcome on early termination, None once a vertex is reached.
    """
    net, s, opts = state.net, state.s, state.options
    grad = gradient(net, s)
    gscale = 1.0 + np.linalg.norm(grad)
    v = -grad.copy()
    tried_opposite = False
    while state.pinv.m < net.input_dim:
        if state.steps >= opts.max_steps:
            return state.finish(STEP_LIMIT)
        if np.linalg.norm(v) <= 1e-12 * gscale:
            v = state.rng.standard_normal(net.input_dim)
            v -= project(state.pinv, net, s, v)
            if np.linalg.norm(v) <= 1e-12 * gscale:
                continue  # unlucky draw inside the pinned subspace
            if v @ grad > 0.0:
                v = -v
            tried_opposite = False
        v = v / np.linalg.norm(v)
        res = advance_max(net, state.x, v, s, state.pinv.owners, state.pairs, opts.zero_tol)
        state.steps += 1
        if not res.bounded:
            if v @ grad < -1e-15 * gscale:
                return state.finish(UNBOUNDED, direction=v.copy())
            # flat ray; try the mirror direction once, then resample
            if not tried_opposite:
                v, tried_opposite = -v, True
            else:
                v, tried_opposite = np.zeros_like(v), False
            continue
        state.x = state.x + res.t * v
        state.emit("find_vertex", neuron=res.neuron, t=res.t)
        try:
            state.pinv = add_axis(state.pinv, net, s, res.neuron, opts.dep_tol)
        except DependentColumn:
            return state.finish(NON_REGULAR, neurons=list(state.pinv.owners) + [res.neuron])
        v = v - project(state.pinv, net, s, v)
        tried_opposite = False
    if opts.position_correction_every:
        position_correction(state)
    return None


def drlsimplex(net: ReluNetwork, x0, options: SolverOptions | None = None,
               pairs: PairGroups | None = None) -> SolveOutcome:
    """Minimize the network over its input space from x0.

    Terminates with one of four outcomes: a certified LocalMinimum, an
    Unbounded descent ray, NonRegular when dependent walls abort a pivot,
    or StepLimit.  The objective is non-increasing along the whole trace
    and strictly decreases at every pivot.  Roundoff is contained two ways:
    walls that drift past drift_refresh_tol force a dense axis rebuild, and
    a pattern bit found marginally stale (within resync_tol) is flipped back
    to match the geometry without moving x.
    """
    t0 = time.perf_counter()
    if pairs is not None:
        pairs.validate(net)
    state = initialize(net, x0, options, pairs)
    opts = state.options
    out = find_vertex(state)
    if out is None:
        out = _pivot_loop(state)
    out.wall_ms = (time.perf_counter() - t0) * 1e3
    return out


def _pivot_loop(state: SolverState) -> SolveOutcome:
    net, opts = state.net, state.options
    n0 = net.input_dim
    next_flip = 0
    pivots_since_refresh = 0
    while True:
        if state.steps >= opts.max_steps:
            return state.finish(STEP_LIMIT)
        grad = gradient(net, state.s)
        row, alpha, i = choose_axis(state.pinv, grad)
        if alpha < -opts.descent_tol * (1.0 + np.linalg.norm(grad)):
            ignore = list(state.pinv.owners)          # old owner stays ignored this advance
            state.pinv = remove_pseudorow(state.pinv, i)
            v = row / np.linalg.norm(row)
            res = advance_max(net, state.x, v, state.s, ignore, state.pairs, opts.zero_tol)
            state.steps += 1
            if not res.bounded:
                return state.finish(UNBOUNDED, direction=v)
            if res.t <= -opts.step_accept_tol:
                xscale = 1.0 + float(np.max(np.abs(state.x)))
                if res.t < -opts.resync_tol * xscale:
                    return state.finish(NON_REGULAR, neurons=[res.neuron])
                # a negative crossing step means the bit for res.neuron claims
                # the wrong side of its wall (roundoff left x marginally past
                # it).  Flip the bit to match the geometry, restore the removed
                # axis, and rebuild; x and f are untouched.
                try:
                    state.s = flip(state.s, res.neuron, state.pairs)
                    state.pinv = add_axis(state.pinv, net, state.s, ignore[i], opts.dep_tol)
                    refresh_pseudoinverse(state)
                except (DependentColumn, Degenerate):
                    return state.finish(NON_REGULAR, neurons=[res.neuron, ignore[i]])
                state.emit("resync", neuron=res.neuron, t=res.t)
                position_correction(state)
                next_flip = 0
                pivots_since_refresh = 0
                continue
            state.x = state.x + res.t * v
            c = res.neuron
            state.emit("pivot", neuron=c, t=res.t, alpha=alpha)
            try:
                state.pinv = add_axis(state.pinv, net, state.s, c, opts.dep_tol)
                state.s = flip(state.s, c, state.pairs)
                state.pinv = update_axis_new_region(
                    state.pinv, state.pinv.m - 1, net, state.s, c, opts.dep_tol
                )
            except (DependentColumn, Degenerate):
                return state.finish(NON_REGULAR, neurons=list(state.pinv.owners) + [c])
            next_flip = 0
            state.pivots += 1
            pivots_since_refresh += 1
            try:
                if opts.axis_refresh_every and pivots_since_refresh >= opts.axis_refresh_every:
                    refresh_pseudoinverse(state)
                    pivots_since_refresh = 0
                if opts.position_correction_every and state.pivots % opts.position_correction_every == 0:
                    resid = position_correction(state)
                    # incremental updates compound multiplicatively near
                    # tight vertices; rebuild as soon as the walls drift
                    # instead of waiting out the fixed cadence
                    if resid > opts.drift_refresh_tol * (1.0 + float(np.max(np.abs(state.x)))):
                        refresh_pseudoinverse(state)
                        pivots_since_refresh = 0
                        position_correction(state)
            except Degenerate:
                return state.finish(NON_REGULAR, neurons=list(state.pinv.owners))
        else:
            if next_flip >= n0:
                state.emit("certify", alpha=alpha)
                return state.finish(LOCAL_MINIMUM)
            # adjacent region across wall next_flip; flips accumulate on purpose,
            # so all 2*n0 (owner, side) combinations get visited
            c = state.pinv.owners[next_flip]
            state.s = flip(state.s, c, state.pairs)
            try:
                state.pinv = update_axis_new_region(
                    state.pinv, next_flip, net, state.s, c, opts.dep_tol
                )
            except Degenerate:
                return state.finish(NON_REGULAR, neurons=[c])
            state.emit("flip", neuron=c, alpha=alpha)
            next_flip += 1
            state.steps += 1


def axis_derivatives(net: ReluNetwork, x, s: ActivationPattern, pinv: PseudoInverse,
                     options: SolverOptions | None = None, pairs: PairGroups | None = None):
    """Directional derivatives along all 2m feasible axes at a pinned point.

    For every owner: the derivative along its axis under the current
    pattern, then (with flips accumulating exactly like the solver's
    certification sweep) under the pattern with that owner flipped.
    Returns a list of (owner, bit, value, grad_norm) and mutates nothing;
    grad_norm is the gradient scale the value should be judged against.
    """
    opts = options or SolverOptions()
    s = s.copy()
    pinv = pinv.copy()
    entries = []
    grad = gradient(net, s)
    gnorm = float(np.linalg.norm(grad))
    for k, c in enumerate(pinv.owners):
        val = float(pinv.matrix[k] @ grad / np.linalg.norm(pinv.matrix[k]))
        entries.append((c, s.get(c), val, gnorm))
    for k, c in enumerate(list(pinv.owners)):
        s = flip(s, c, pairs)
        pinv = update_axis_new_region(pinv, k, net, s, c, opts.dep_tol)
        grad = gradient(net, s)
        gnorm = float(np.linalg.norm(grad))
        val = float(pinv.matrix[k] @ grad / np.linalg.norm(pinv.matrix[k]))
        entries.append((c, s.get(c), val, gnorm))
    return entries


def certify_local_min(net: ReluNetwork, x, s: ActivationPattern, pinv: PseudoInverse,
                      options: SolverOptions | None = None,
                      pairs: PairGroups | None = None) -> bool:
    """True when no feasible axis at x has a negative directional derivative.

    With fewer active walls than input dimensions the free subspace must
    also be gradient-free, otherwise moving inside it would descend.
    """
    opts = options or SolverOptions()
    if pinv.m < net.input_dim:
        grad = gradient(net, s)
        free = grad - project(pinv, net, s, grad)
        if np.linalg.norm(free) > opts.descent_tol * (1.0 + np.linalg.norm(grad)):
            return False
    tol = opts.descent_tol
    for _, _, val, gnorm in axis_derivatives(net, x, s, pinv, opts, pairs):
        if val < -tol * (1.0 + gnorm):
            return False
    return True


# ---------------------------------------------------------------------------
# quadratic add-on objective


@dataclass
class QuadraticObjective:
    """q(x) = x' quad x + lin . x + const, minimized jointly with the network."""

    quad: np.ndarray
    lin: np.ndarray
    const: float = 0.0

    def __post_init__(self):
        self.quad = np.asarray(self.quad, dtype=np.float64)
        self.lin = np.asarray(self.lin, dtype=np.float64)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(x @ self.quad @ x + self.lin @ x + self.const)

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (self.quad + self.quad.T) @ x + self.lin


def segment_parabola(q: QuadraticObjective, x, v):
    """Coefficients (a, b, c) of t -> q(x + t v)."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    a = float(v @ q.quad @ v)
    b = float(x @ (q.quad + q.quad.T) @ v + q.lin @ v)
    return a, b, q.value(x)


def parabola_step(a: float, b: float, t_max: float) -> float:
    """Minimizer of a t^2 + b t over [0, t_max]; t_max when not strictly convex."""
    if a > 0.0:
        return float(min(max(-b / (2.0 * a), 0.0), t_max))
    return float(t_max)


def _feasible_direction(g, normals):
    """-g with the components violating any active wall removed.

    Repeatedly subtracts (orthonormalized) violated normals until the
    direction points into the closed region; at most one pass per wall.
    """
    v = -g.copy()
    basis: list[np.ndarray] = []
    for _ in range(len(normals) + 1):
        vn = np.linalg.norm(v)
        if vn == 0.0:
            break
        bad = [u for u in normals if v @ u < -1e-13 * vn * np.linalg.norm(u)]
        if not bad:
            break
        for u in bad:
            w = u.copy()
            for bvec in basis:
                w -= (w @ bvec) * bvec
            wn = np.linalg.norm(w)
            if wn <= 1e-13 * np.linalg.norm(u):
                continue
            w /= wn
            basis.append(w)
            v -= (v @ w) * w
    return v


def solve_quadratic(net: ReluNetwork, q: QuadraticObjective, x0,
                    options: SolverOptions | None = None,
                    pairs: PairGroups | None = None) -> SolveOutcome:
    """Minimize network + quadratic by sliding along active walls.

    Projected steepest descent with exact line search on each segment:
    the direction is the negative combined gradient, orthogonalized
    against the walls currently sat on; steps stop at the first new wall
    or at the segment parabola's vertex.  When the projected gradient
    vanishes, adjacent regions are probed by flipping active units
    (cumulatively); if none descends the point is reported as a local
    minimum.
    """
    t0 = time.perf_counter()
    if pairs is not None:
        pairs.validate(net)
    opts = options or SolverOptions()
    x = np.asarray(x0, dtype=np.float64).copy()
    state = SolverState(
        net=net, x=x, s=_pattern_with_valid_pairs(net, x, pairs),
        pinv=PseudoInverse.empty(net.input_dim), options=opts, pairs=pairs,
        rng=opts.make_rng(), objective=lambda y: evaluate(net, y) + q.value(y),
    )
    secondary = set()
    if pairs is not None:
        secondary = {b for _, b in pairs.pairs}
    out = None
    while out is None:
        if state.steps >= opts.max_steps:
            out = state.finish(STEP_LIMIT)
            break
        active = [c for c in critical_indices(net, state.s, state.x, opts.zero_tol)
                  if c not in secondary]
        g = q.grad(state.x) + gradient(net, state.s)
        normals = [oriented_normal(net, state.s, c) for c in active]
        v = _feasible_direction(g, normals)
        if np.linalg.norm(v) > 1e-10 * (1.0 + np.linalg.norm(g)):
            v /= np.linalg.norm(v)
            res = advance_max(net, state.x, v, state.s, active, state.pairs, opts.zero_tol)
            state.steps += 1
            a, _, _ = segment_parabola(q, state.x, v)
            slope = float(v @ g)
            t_max = max(res.t, 0.0) if res.bounded else float("inf")
            t = parabola_step(a, slope, t_max)
            if not np.isfinite(t) or t > _HUGE_T:
                out = state.finish(UNBOUNDED, direction=v)
                break
            state.x = state.x + t * v
            state.emit("pivot", neuron=res.neuron if t == t_max else None, t=t, alpha=slope)
        else:
            if not active:
                state.emit("certify", alpha=0.0)
                out = state.finish(LOCAL_MINIMUM)
                break
            # probe adjacent regions; flips accumulate like the vertex solver
            found = False
            for c in active:
                state.s = flip(state.s, c, state.pairs)
                state.steps += 1
                state.emit("flip", neuron=c)
                g2 = q.grad(state.x) + gradient(net, state.s)
                normals2 = [oriented_normal(net, state.s, cc) for cc in active]
                v2 = _feasible_direction(g2, normals2)
                if np.linalg.norm(v2) > 1e-10 * (1.0 + np.linalg.norm(g2)):
                    found = True
                    break
            if not found:
                state.emit("certify", alpha=0.0)
                out = state.finish(LOCAL_MINIMUM)
                break
    out.wall_ms = (time.perf_counter() - t0) * 1e3
    return out
