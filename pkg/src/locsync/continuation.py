"""Pseudo-arclength continuation with fold detection and closure classification.

The predictor steps along the null vector of the equilibrated (2N) x (2N+1)
Jacobian; the corrector solves the bordered system with the hyperplane
constraint <x - x_prev, tangent> = ds.  Folds are turning points of mu,
detected from sign changes of the tangent's mu component and refined by
bisection in arclength.  The engine contains no randomness: identical
inputs give bitwise-identical branches.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .lattice import (
    BoundaryKind,
    CouplingKind,
    PolarState,
    canonicalize,
    jacobian,
    residual,
    wrap_phase,
)
from .model import NonlinearitySpec

__all__ = [
    "ContinuationError",
    "NoConvergence",
    "SingularJacobian",
    "LatticeSystem",
    "ContinuationConfig",
    "Bordered",
    "FIXED_MU",
    "BranchPoint",
    "FoldRecord",
    "Branch",
    "newton_correct",
    "branch_tangent",
    "continue_branch",
    "detect_folds",
    "classify_closure",
    "merge_branches",
]

FIXED_MU = "fixed_mu"

CLOSED_ISOLA = "closed_isola"
OPEN = "open"
WINDOW_EXIT = "window_exit"
STEP_LIMIT = "step_limit"


class ContinuationError(RuntimeError):
    pass


class NoConvergence(ContinuationError):
    pass


class SingularJacobian(ContinuationError):
    pass


@dataclass(frozen=True)
class LatticeSystem:
    """The assembled problem: nonlinearity, coupling, strength, boundary."""

    spec: NonlinearitySpec
    coupling: CouplingKind
    eps: float
    bc: BoundaryKind

    def residual(self, state: PolarState) -> np.ndarray:
        return residual(self.spec, self.coupling, state, self.eps, self.bc)

    def jacobian(self, state: PolarState) -> np.ndarray:
        return jacobian(self.spec, self.coupling, state, self.eps, self.bc)

    def residual_norm(self, state: PolarState) -> float:
        return float(np.max(np.abs(self.residual(state))))


@dataclass(frozen=True)
class ContinuationConfig:
    ds_init: float = 0.01
    ds_min: float = 1e-7
    ds_max: float = 0.05
    newton_tol: float = 1e-10
    newton_max_iter: int = 12
    max_steps: int = 20000
    mu_window: tuple[float, float] = (-0.05, 1.05)
    closure_tol: float = 1e-6
    fold_refine_tol: float = 1e-10

    def __post_init__(self):
        if not (0.0 < self.ds_min <= self.ds_init <= self.ds_max):
            raise ValueError("need 0 < ds_min <= ds_init <= ds_max")
        if min(self.newton_tol, self.closure_tol, self.fold_refine_tol) <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.mu_window[0] >= self.mu_window[1]:
            raise ValueError("empty mu window")

    def digest(self) -> str:
        payload = json.dumps(
            {k: getattr(self, k) for k in (
                "ds_init", "ds_min", "ds_max", "newton_tol", "newton_max_iter",
                "max_steps", "mu_window", "closure_tol", "fold_refine_tol")},
            sort_keys=True, default=list,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Bordered:
    """Corrector mode: arclength constraint against a previous point."""

    x_prev: np.ndarray
    tangent: np.ndarray
    ds: float


def _equilibrate_rows(a: np.ndarray, b: np.ndarray):
    """Scale each row of [a | b] by the inverse of its max-abs entry.

    Far-field phase rows scale like eps * r_n and otherwise wreck the
    conditioning of the linear solve.
    """
    scale = np.max(np.abs(a), axis=1)
    scale = np.where(scale > 1e-300, scale, 1.0)
    return a / scale[:, None], b / scale


class _NewtonOutcome:
    __slots__ = ("state", "iterations")

    def __init__(self, state: PolarState, iterations: int):
        self.state = state
        self.iterations = iterations


def _dead_interfaces(state: PolarState, eps: float, tol: float) -> np.ndarray:
    """Interfaces whose phases are numerically undetermined.

    Deep-tail amplitudes decay like (eps/mu)^n and reach machine noise on
    longer chains; the phase between two such nodes only enters the
    residual with weight eps * r, so any value below tol/eps is invisible.
    Those phases are pinned to zero to keep states, tangents, and closure
    tests well defined.
    """
    if eps <= 0.0:
        return np.zeros(state.n - 1, dtype=bool)
    thr = 0.1 * tol / eps
    pair_max = np.maximum(state.r[:-1], state.r[1:])
    return np.abs(pair_max) < thr


def _pin_dead_phases(state: PolarState, eps: float, tol: float) -> PolarState:
    dead = _dead_interfaces(state, eps, tol)
    if not np.any(dead):
        return state
    phi = state.phi.copy()
    phi[dead] = 0.0
    return PolarState(state.r, phi, state.rho, state.mu)


SOLID_PHASE_AMPLITUDE = 1e-3


def _solid_mask(state: PolarState) -> np.ndarray:
    """Coordinates that meaningfully identify a point on the branch.

    All amplitudes, rho, and mu count; an interface phase counts only when
    one of its adjacent amplitudes is significant.  Distances for the step
    guard and closure test use this mask, because phases deep in the tail
    are only determined up to solver noise.
    """
    n = state.n
    mask = np.ones(2 * n + 1, dtype=bool)
    pair_max = np.maximum(state.r[:-1], state.r[1:])
    mask[n: 2 * n - 1] = np.abs(pair_max) >= SOLID_PHASE_AMPLITUDE
    return mask


def _newton_solve(
    system: LatticeSystem,
    state: PolarState,
    mode,
    tol: float,
    max_iter: int,
) -> _NewtonOutcome:
    n = state.n
    x = state.pack()
    bordered = isinstance(mode, Bordered)
    if not bordered and mode != FIXED_MU:
        raise ValueError(f"unknown Newton mode {mode!r}")

    # Converge a notch below tol so that pinning dead tail phases (which
    # perturbs the residual by at most 0.4 tol) cannot push a reported
    # state back above the tolerance.
    conv_tol = 0.45 * tol
    for it in range(max_iter + 1):
        current = PolarState.unpack(x, n)
        f = system.residual(current)
        if bordered:
            cons = float(np.dot(x - mode.x_prev, mode.tangent)) - mode.ds
            converged = max(np.max(np.abs(f)), abs(cons)) <= conv_tol
        else:
            converged = np.max(np.abs(f)) <= conv_tol
        if converged:
            out = _pin_dead_phases(current, system.eps, tol)
            if np.min(out.r) < -1e-9:
                # Exact only for r-even nonlinearities; keep the raw state if
                # an odd omega part would push the residual back over tol.
                flipped = canonicalize(out)
                if float(np.max(np.abs(system.residual(flipped)))) <= tol:
                    out = flipped
            return _NewtonOutcome(out, it)
        if it == max_iter:
            break

        jac = system.jacobian(current)
        if bordered:
            a = np.vstack([jac, mode.tangent])
            rhs = np.concatenate([-f, [-cons]])
        else:
            a = jac[:, : 2 * n]
            rhs = -f
        a, rhs = _equilibrate_rows(a, rhs)
        try:
            delta = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError as err:
            raise SingularJacobian(str(err)) from err
        if not np.all(np.isfinite(delta)):
            raise SingularJacobian("non-finite Newton step")
        if bordered:
            x = x + delta
        else:
            x = x.copy()
            x[: 2 * n] += delta
        x[n: 2 * n - 1] = wrap_phase(x[n: 2 * n - 1])

    raise NoConvergence(
        f"Newton did not reach tol={tol} within {max_iter} iterations"
    )


def newton_correct(
    system: LatticeSystem,
    state: PolarState,
    mode=FIXED_MU,
    tol: float = 1e-10,
    max_iter: int = 12,
) -> PolarState:
    """Correct a state onto the solution set.

    ``mode=FIXED_MU`` solves the square system in (r, phi, rho) at frozen
    mu; a ``Bordered`` mode solves the augmented pseudo-arclength system in
    (r, phi, rho, mu).  Raises NoConvergence / SingularJacobian.
    """
    return _newton_solve(system, state, mode, tol, max_iter).state


def branch_tangent(
    system: LatticeSystem,
    state: PolarState,
    prev_tangent: np.ndarray | None = None,
    direction: int = 1,
    subspace_tol: float = 1e-5,
    newton_tol: float = 1e-10,
) -> np.ndarray:
    """Unit tangent along the branch, consistently oriented.

    The tangent is the projection of a reference direction (the previous
    tangent, or the mu axis on the first call) onto the near-null subspace
    of the equilibrated Jacobian.  Dead interface-phase columns are pruned,
    and gray-zone tail directions with tiny singular values are absorbed
    into the subspace, so tail noise cannot pollute the tangent.  Raises
    SingularJacobian when the reference direction loses contact with the
    null space; callers fall back to the secant.
    """
    n = state.n
    jac = system.jacobian(state)
    jac, _ = _equilibrate_rows(jac, np.zeros(jac.shape[0]))
    dead = _dead_interfaces(state, system.eps, newton_tol)
    alive = np.ones(2 * n + 1, dtype=bool)
    alive[n: 2 * n - 1] = ~dead
    _, s, vt = np.linalg.svd(jac[:, alive])
    null_rows = vt[len(s):]
    small = s <= subspace_tol * s[0]
    basis = np.vstack([vt[: len(s)][small], null_rows]) if np.any(small) else null_rows
    if basis.shape[0] == 0:
        raise SingularJacobian("no null direction found")

    if prev_tangent is not None:
        ref = np.asarray(prev_tangent, dtype=float).copy()
    else:
        ref = np.zeros(2 * n + 1)
        ref[-1] = float(np.sign(direction))
    solid = _solid_mask(state)
    ref[~solid] = 0.0
    proj = basis.T @ (basis @ ref[alive])
    if prev_tangent is None and float(np.linalg.norm(proj)) < 1e-8:
        # at a fold the mu axis is orthogonal to the branch direction; take
        # the dominant null vector instead
        proj = basis[-1]
    t = np.zeros(2 * n + 1)
    t[alive] = proj
    # The physical branch direction lives in the solid coordinates; keeping
    # gray tail-phase components would let solver noise accumulate into the
    # tangent step after step.
    t[~solid] = 0.0
    norm = float(np.linalg.norm(t))
    if norm < 1e-8:
        raise SingularJacobian("tangent reference orthogonal to the null space")
    return t / norm


@dataclass(frozen=True)
class BranchPoint:
    state: PolarState
    arclength: float
    tangent: np.ndarray
    is_fold: bool = False
    newton_iters: int = 0

    @property
    def mu(self) -> float:
        return self.state.mu


@dataclass(frozen=True)
class FoldRecord:
    mu: float
    state: PolarState
    arclength: float
    refined: bool = True


@dataclass
class Branch:
    points: list[BranchPoint]
    folds: list[FoldRecord] = field(default_factory=list)
    closure: str = OPEN
    provenance: dict = field(default_factory=dict)

    @property
    def mu_values(self) -> np.ndarray:
        return np.array([p.state.mu for p in self.points])

    def amplitude_norms(self) -> np.ndarray:
        return np.array([float(np.linalg.norm(p.state.r)) for p in self.points])

    def arclengths(self) -> np.ndarray:
        return np.array([p.arclength for p in self.points])


def _attempt_step(system, config, x_prev, tangent, ds):
    n = (x_prev.size - 1) // 2
    predictor = x_prev + ds * tangent
    guess = PolarState.unpack(predictor, n)
    outcome = _newton_solve(
        system, guess, Bordered(x_prev, tangent, ds),
        config.newton_tol, config.newton_max_iter,
    )
    # Reject corrector landings far from the predictor: those are jumps onto
    # another solution sheet (worst case the trivial r=0 line), not steps
    # along the branch.  Halving ds then also adapts to fold curvature.
    # Only solid coordinates count; tail phases drift freely at solver noise.
    solid = _solid_mask(outcome.state)
    drift = float(np.linalg.norm((outcome.state.pack() - predictor)[solid]))
    if drift > 2.0 * abs(ds):
        raise NoConvergence(
            f"corrector drifted {drift:.3e} from the predictor at ds={ds:.3e}"
        )
    return outcome


def continue_branch(
    system: LatticeSystem,
    seed: PolarState,
    direction: int,
    config: ContinuationConfig,
) -> Branch:
    """Trace the branch through ``seed`` in one direction.

    Terminates on mu leaving the window, the step limit, isola closure
    (return to the start point within closure_tol after arclength
    > 10 ds_init), or an unresolvable corrector failure ("open").
    """
    if direction not in (-1, 1):
        raise ValueError("direction must be +1 or -1")
    res0 = system.residual_norm(seed)
    if res0 > config.newton_tol:
        raise ValueError(
            f"seed residual {res0:.3e} exceeds newton_tol={config.newton_tol}"
        )

    tangent = branch_tangent(system, seed, direction=direction)
    points = [BranchPoint(seed.copy(), 0.0, tangent, False, 0)]
    x_start = seed.pack()
    solid_start = _solid_mask(seed)
    arclength = 0.0
    ds = config.ds_init
    termination = None

    while termination is None:
        if len(points) > config.max_steps:
            termination = STEP_LIMIT
            break

        prev = points[-1]
        x_prev = prev.state.pack()
        outcome = None
        while True:
            try:
                outcome = _attempt_step(system, config, x_prev, prev.tangent, ds)
                break
            except (NoConvergence, SingularJacobian):
                ds *= 0.5
                if ds < config.ds_min:
                    break
        if outcome is None:
            termination = OPEN
            break

        new_state = outcome.state
        x_new = new_state.pack()
        try:
            new_tangent = branch_tangent(system, new_state, prev_tangent=prev.tangent)
        except SingularJacobian:
            secant = x_new - x_prev
            norm = float(np.linalg.norm(secant))
            if norm == 0.0:
                termination = OPEN
                break
            new_tangent = secant / norm

        arclength += ds
        points.append(BranchPoint(new_state, arclength, new_tangent, False,
                                  outcome.iterations))

        if outcome.iterations <= 3:
            ds = min(ds * 1.3, config.ds_max)

        mu = new_state.mu
        if not (config.mu_window[0] <= mu <= config.mu_window[1]):
            termination = WINDOW_EXIT
            break

        if arclength > 10.0 * config.ds_init:
            gap = float(np.linalg.norm((x_new - x_start)[solid_start]))
            if gap < max(2.0 * ds, 2.0 * config.ds_init):
                landing = _attempt_closure(system, config, x_new, new_tangent,
                                           x_start, solid_start)
                if landing is not None:
                    arclength += float(np.linalg.norm(landing.state.pack() - x_new))
                    points.append(BranchPoint(landing.state, arclength, new_tangent,
                                              False, landing.iterations))
                    termination = CLOSED_ISOLA
                    break

    branch = Branch(
        points=points,
        closure=termination or OPEN,
        provenance={
            "direction": direction,
            "config_hash": config.digest(),
            "seed_mu": seed.mu,
            "seed_r": seed.r.tolist(),
            "termination": termination or OPEN,
        },
    )
    branch.folds = detect_folds(branch, system, config)
    _insert_fold_points(branch)
    return branch


def _attempt_closure(system, config, x_from, tangent, x_start, solid_start):
    """Try to land exactly on the start point; None if this is not closure."""
    ds_land = float(np.dot(x_start - x_from, tangent))
    try:
        outcome = _newton_solve(
            system,
            PolarState.unpack(x_from + ds_land * tangent, (x_from.size - 1) // 2),
            Bordered(x_from, tangent, ds_land),
            config.newton_tol,
            config.newton_max_iter,
        )
    except (NoConvergence, SingularJacobian):
        return None
    gap = float(np.linalg.norm((outcome.state.pack() - x_start)[solid_start]))
    if gap < config.closure_tol:
        return outcome
    return None


def _fold_brackets(points: list[BranchPoint]) -> list[int]:
    """Indices i where the tangent mu-component changes sign between i, i+1."""
    walk = [p for p in points if not p.is_fold]
    out = []
    for i in range(len(walk) - 1):
        a, b = walk[i].tangent[-1], walk[i + 1].tangent[-1]
        if a != 0.0 and b != 0.0 and (a < 0.0) != (b < 0.0):
            out.append(i)
    return out


def detect_folds(
    branch: Branch,
    system: LatticeSystem,
    config: ContinuationConfig | None = None,
) -> list[FoldRecord]:
    """Locate folds by bisection on arclength between sign-change brackets.

    Each trial re-corrects a bordered step from the left bracket point and
    evaluates the tangent there; the bracket shrinks until the tangent's mu
    component drops below fold_refine_tol.  Non-convergent refinements are
    recorded unrefined.
    """
    if config is None:
        config = ContinuationConfig()
    mu_lo, mu_hi = config.mu_window
    walk = [p for p in branch.points if not p.is_fold]
    records: list[FoldRecord] = []
    for i in _fold_brackets(walk):
        left, right = walk[i], walk[i + 1]
        if not (mu_lo <= left.state.mu <= mu_hi
                and mu_lo <= right.state.mu <= mu_hi):
            continue  # exit overshoot; structure past the window is out of scope
        ds_total = right.arclength - left.arclength
        x_left = left.state.pack()
        sign_left = np.sign(left.tangent[-1])

        ds_lo, ds_hi = 0.0, ds_total
        best_state, best_tmu, best_ds = right.state, float(right.tangent[-1]), ds_total
        refined = False
        for _ in range(100):
            mid = 0.5 * (ds_lo + ds_hi)
            try:
                outcome = _attempt_step(system, config, x_left, left.tangent, mid)
                t_mid = branch_tangent(system, outcome.state,
                                       prev_tangent=left.tangent)
            except (NoConvergence, SingularJacobian):
                break
            tmu = float(t_mid[-1])
            if abs(tmu) < abs(best_tmu):
                best_state, best_tmu, best_ds = outcome.state, tmu, mid
            if abs(tmu) <= config.fold_refine_tol:
                refined = True
                break
            if np.sign(tmu) == sign_left:
                ds_lo = mid
            else:
                ds_hi = mid
        records.append(FoldRecord(
            mu=best_state.mu,
            state=best_state,
            arclength=left.arclength + best_ds,
            refined=refined,
        ))
    return records


def _insert_fold_points(branch: Branch) -> None:
    """Insert refined fold states into the point list, flagged is_fold."""
    if not branch.folds:
        return
    for rec in branch.folds:
        tangent = None
        for p in branch.points:
            if p.arclength <= rec.arclength:
                tangent = p.tangent
        if tangent is None:
            tangent = branch.points[0].tangent
        branch.points.append(BranchPoint(rec.state, rec.arclength, tangent,
                                         True, 0))
    branch.points.sort(key=lambda p: (p.arclength, not p.is_fold))


def classify_closure(branch: Branch, config: ContinuationConfig) -> str:
    """closed_isola iff the branch returns to its start; else the recorded reason."""
    if len(branch.points) < 2:
        return branch.closure
    solid = _solid_mask(branch.points[0].state)
    start = branch.points[0].state.pack()
    end = branch.points[-1].state.pack()
    total = branch.points[-1].arclength
    if total > 10.0 * config.ds_init and \
            float(np.linalg.norm((end - start)[solid])) < config.closure_tol:
        return CLOSED_ISOLA
    return branch.closure


def merge_branches(minus: Branch, plus: Branch) -> Branch:
    """Join the two directional runs from a common seed into one branch.

    The minus-direction points are reversed and re-parametrized so the
    merged arclength increases monotonically; fold records are shifted
    accordingly.
    """
    offset = minus.points[-1].arclength
    points: list[BranchPoint] = []
    for p in reversed(minus.points):
        # flip the tangent so orientation follows the merged traversal
        points.append(replace(p, arclength=offset - p.arclength,
                              tangent=-p.tangent))
    for p in plus.points[1:]:
        points.append(replace(p, arclength=offset + p.arclength))
    folds = [replace(f, arclength=offset - f.arclength) for f in minus.folds]
    folds += [replace(f, arclength=offset + f.arclength) for f in plus.folds]
    folds.sort(key=lambda f: f.arclength)

    reasons = {minus.closure, plus.closure}
    if CLOSED_ISOLA in reasons:
        closure = CLOSED_ISOLA
    elif WINDOW_EXIT in reasons:
        closure = WINDOW_EXIT
    elif STEP_LIMIT in reasons:
        closure = STEP_LIMIT
    else:
        closure = OPEN
    return Branch(
        points=points,
        folds=folds,
        closure=closure,
        provenance={
            "merged": True,
            "minus": minus.provenance,
            "plus": plus.provenance,
        },
    )
