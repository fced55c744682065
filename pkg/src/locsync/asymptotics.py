"""Leading-order formulas: seeds, exact eps=0 branch curves, fold predictors.

Everything here is closed-form in the bistability roots.  Seeds feed the
continuation engine; the curve evaluators and fold predictors provide the
independent cross-checks for computed branches.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .lattice import BoundaryKind, CouplingKind, PolarState
from .model import NonlinearitySpec, bistable_roots, rest_state_roots

__all__ = [
    "AsymptoticsError",
    "DegenerateDenominatorError",
    "SeedAnsatz",
    "ChartPrediction",
    "FoldPrediction",
    "MismatchReport",
    "RecruitmentPrediction",
    "core_correction",
    "farfield_tail",
    "build_seed",
    "snaking_curve",
    "snaking_domain",
    "isola_curve",
    "fold_prediction_mu1",
    "fold_prediction_mu0",
    "mu0_eps_chart",
    "mu0_mu_chart",
    "mu1_eps_chart",
    "mu1_mu_chart",
    "mu0_chart_overlap_roots",
    "mu0_normalization",
    "mismatch_bound",
    "conservative_recruitment",
    "phase_block_determinant",
    "core_phase_block",
]

MU0_FOLD_CONSTANT = 1.5 * 2.0 ** (1.0 / 3.0)   # (3/2) * cbrt(2)
MU0_FOLD_AMPLITUDE = 2.0 ** (-1.0 / 3.0)


class AsymptoticsError(ValueError):
    pass


class DegenerateDenominatorError(AsymptoticsError):
    pass


@dataclass(frozen=True)
class SeedAnsatz:
    """Pattern descriptor for an asymptotic seed.

    ``k`` core nodes sit on the nonzero roots selected by ``pattern``
    (entries "plus"/"minus"); the remaining nodes carry the geometric
    far-field tail.  A k-core all-plus conservative seed lands on the isola
    whose mid-height pattern has k fully active nodes.
    """

    k: int
    pattern: tuple[str, ...]
    phase_template: Literal["in_phase", "conservative"]
    bc: BoundaryKind
    n_nodes: int

    def __post_init__(self):
        if not (1 <= self.k <= self.n_nodes - 1):
            raise AsymptoticsError(f"need 1 <= k <= N-1, got k={self.k}, N={self.n_nodes}")
        if len(self.pattern) != self.k:
            raise AsymptoticsError("pattern length must equal k")
        if any(p not in ("plus", "minus") for p in self.pattern):
            raise AsymptoticsError("pattern entries must be 'plus' or 'minus'")
        if self.phase_template not in ("in_phase", "conservative"):
            raise AsymptoticsError(f"unknown phase template {self.phase_template!r}")


def _core_roots(spec, mu, pattern):
    prof = bistable_roots(spec, mu)
    return np.array([prof.r_plus if p == "plus" else prof.r_minus for p in pattern])


def _core_denominators(spec, mu, r0):
    d = np.asarray(spec.lam(r0, mu)) + r0 * np.asarray(spec.lam_r(r0, mu))
    if np.any(np.abs(d) < 1e-12):
        raise DegenerateDenominatorError(
            "core linearization denominator lambda + r lambda_r vanishes"
        )
    return d


def _left_ghost_root(r0: np.ndarray, bc: BoundaryKind) -> float:
    if bc is BoundaryKind.OFF_SITE:
        return float(r0[0])
    return float(r0[1]) if r0.size >= 2 else 0.0


def core_correction(spec: NonlinearitySpec, mu: float, pattern, bc: BoundaryKind) -> np.ndarray:
    """First-order core amplitude corrections for the in-phase pattern.

    sigma_n = (2 r0_n - r0_{n+1} - r0_{n-1}) / (lambda + r0_n lambda_r) with
    the far-field neighbor of the last core node set to zero and the left
    ghost taken from the boundary kind.
    """
    pattern = tuple(pattern)
    r0 = _core_roots(spec, mu, pattern)
    d = _core_denominators(spec, mu, r0)
    ext = np.concatenate([[_left_ghost_root(r0, bc)], r0, [0.0]])
    num = 2.0 * ext[1:-1] - ext[2:] - ext[:-2]
    return num / d


def _general_core_correction(spec, mu, r0, phi, bc, coupling) -> np.ndarray:
    """Leading core correction for arbitrary coupling and seed phases.

    sigma_n = -(c_re A0_n - c_im B0_n) / (lambda + r0_n lambda_r) evaluated
    on the uncoupled core state; reduces to ``core_correction`` for the
    dissipative in-phase template.
    """
    k = r0.size
    d = _core_denominators(spec, mu, r0)
    ext = np.concatenate([[_left_ghost_root(r0, bc)], r0, [0.0]])
    phi_ext = np.concatenate(
        [[-phi[0] if bc is BoundaryKind.ON_SITE else 0.0], phi[: k]]
    )
    a0 = ext[2:] * np.cos(phi_ext[1:]) - 2.0 * r0 + ext[:-2] * np.cos(phi_ext[:-1])
    b0 = ext[2:] * np.sin(phi_ext[1:]) - ext[:-2] * np.sin(phi_ext[:-1])
    return -(coupling.c_re * a0 - coupling.c_im * b0) / d


def farfield_tail(
    spec: NonlinearitySpec, mu: float, eps: float, k: int, r0_k: float, n_nodes: int
) -> np.ndarray:
    """Geometric tail amplitudes for nodes k+1..N.

    r_n = [eps / lambda(0, mu)]^(n-k) * r0_k * (-1)^(n-k); the alternating
    sign cancels the negative lambda(0, mu), so the tail is positive with
    decay ratio eps / |lambda(0, mu)|.
    """
    lam0 = float(spec.lam(0.0, mu))
    if abs(lam0) < 1e-12:
        raise AsymptoticsError("lambda(0, mu) vanishes; far-field tail undefined")
    exponents = np.arange(1, n_nodes - k + 1)
    return (-eps / lam0) ** exponents * r0_k


def build_seed(
    spec: NonlinearitySpec,
    mu: float,
    eps: float,
    ansatz: SeedAnsatz,
    coupling: CouplingKind,
) -> PolarState:
    """Assemble the asymptotic seed state for Newton correction.

    Core amplitudes r0_n + eps*sigma_n (coupling-aware correction), the
    geometric far-field tail, template phases, and rho = omega0(mu).
    """
    k, n = ansatz.k, ansatz.n_nodes
    r0 = _core_roots(spec, mu, ansatz.pattern)

    phi = np.zeros(n - 1)
    if ansatz.phase_template == "conservative":
        phi[: k - 1] = -np.pi / 2.0
        if k - 1 < n - 1:
            phi[k - 1] = np.pi / 2.0

    sigma = _general_core_correction(spec, mu, r0, phi, ansatz.bc, coupling)
    r = np.empty(n)
    r[:k] = r0 + eps * sigma
    r[k:] = farfield_tail(spec, mu, eps, k, float(r0[-1]), n)
    return PolarState(r, phi, float(spec.omega0(mu)), mu)


def _mu_star(s: float) -> float:
    return s if s <= 1.0 else 2.0 - s


def _roots_at(spec, mu):
    if mu <= 0.0:
        return rest_state_roots(spec)
    prof = bistable_roots(spec, mu)
    return prof.r_minus, prof.r_plus


def snaking_domain(n_nodes: int) -> tuple[float, float]:
    """Concatenated arclength domain of the eps=0 snaking skeleton."""
    return 0.0, 2.0 * n_nodes


def snaking_curve(spec: NonlinearitySpec, n_nodes: int, s: float) -> PolarState:
    """Exact eps=0 snaking-branch point at concatenated arclength s.

    Segment k = floor(s/2) (local coordinate in [0, 2]) has its first k
    nodes on R_+(s), node k+1 on R_0(s), and the rest at zero; mu follows
    the tent map mu_*(s) and all phases vanish.
    """
    lo, hi = snaking_domain(n_nodes)
    if not (lo <= s <= hi):
        raise AsymptoticsError(f"s={s} outside the snaking domain [{lo}, {hi}]")
    seg = min(int(s // 2), n_nodes - 1)
    local = s - 2.0 * seg
    mu = _mu_star(local)
    r_minus, r_plus = _roots_at(spec, mu)
    r0 = r_minus if local <= 1.0 else r_plus
    r = np.zeros(n_nodes)
    r[:seg] = r_plus
    r[seg] = r0
    return PolarState(r, np.zeros(n_nodes - 1), float(spec.omega0(mu)), mu)


def isola_curve(
    spec: NonlinearitySpec,
    n_nodes: int,
    k: int,
    s: float,
    half: Literal["lower", "upper"],
) -> PolarState:
    """Exact eps=0 point of the k-th conservative isola skeleton.

    Lower half: k nodes at R_+(s) and node k+1 at R_0(s).  Upper half:
    node k+1 at R_0(2-s) with node k+2 recruited at R_-(s).  Phases are
    -pi/2 across the first k interfaces and +pi/2 at interface k+1.
    """
    if not (1 <= k <= n_nodes - 2):
        raise AsymptoticsError(f"need 1 <= k <= N-2, got k={k}, N={n_nodes}")
    if not (0.0 <= s <= 2.0):
        raise AsymptoticsError(f"s={s} outside [0, 2]")
    if half not in ("lower", "upper"):
        raise AsymptoticsError(f"half must be 'lower' or 'upper', got {half!r}")
    mu = _mu_star(s)
    r_minus, r_plus = _roots_at(spec, mu)
    r = np.zeros(n_nodes)
    r[:k] = r_plus
    if half == "lower":
        r[k] = r_minus if s <= 1.0 else r_plus
    else:
        s_mirror = 2.0 - s
        r[k] = r_minus if s_mirror <= 1.0 else r_plus
        r[k + 1] = r_minus
    phi = np.zeros(n_nodes - 1)
    phi[:k] = -np.pi / 2.0
    if k < n_nodes - 1:
        phi[k] = np.pi / 2.0
    return PolarState(r, phi, float(spec.omega0(mu)), mu)


@dataclass(frozen=True)
class FoldPrediction:
    mu: float
    amplitude: float | None
    correction_exponent: float  # relative correction is O(eps**exponent)


def fold_prediction_mu1(eps: float) -> FoldPrediction:
    """Leading fold location near mu = 1: mu = 1 - eps*(1 + O(sqrt(eps)))."""
    return FoldPrediction(mu=1.0 - eps, amplitude=1.0, correction_exponent=0.5)


def fold_prediction_mu0(eps: float) -> FoldPrediction:
    """Leading recruitment-fold location near mu = 0.

    mu = (3/2) cbrt(2) eps^(2/3) with recruiting amplitude cbrt(eps/2),
    both up to relative O(eps^(1/3)) corrections.
    """
    if eps == 0.0:
        return FoldPrediction(mu=0.0, amplitude=0.0, correction_exponent=1.0 / 3.0)
    return FoldPrediction(
        mu=MU0_FOLD_CONSTANT * eps ** (2.0 / 3.0),
        amplitude=MU0_FOLD_AMPLITUDE * eps ** (1.0 / 3.0),
        correction_exponent=1.0 / 3.0,
    )


@dataclass(frozen=True)
class ChartPrediction:
    chart: Literal["eps_chart", "mu_chart"]
    s: float
    mu: float | None
    eps: float | None
    fold_flag: bool


def mu0_eps_chart(s: float) -> ChartPrediction:
    """Recruitment family in the chart eps~ = 1: mu~ = (1 + s^3)/s, s > 0."""
    if s <= 0.0:
        raise AsymptoticsError("chart parameter must be positive")
    return ChartPrediction(
        chart="eps_chart",
        s=s,
        mu=(1.0 + s**3) / s,
        eps=None,
        fold_flag=abs(s - MU0_FOLD_AMPLITUDE) < 1e-12,
    )


def mu0_mu_chart(s: float) -> ChartPrediction:
    """Recruitment family in the chart mu~ = 2: eps~ = s (2 - s^2)."""
    return ChartPrediction(chart="mu_chart", s=s, mu=None, eps=s * (2.0 - s**2),
                           fold_flag=False)


def mu1_eps_chart(s: float) -> ChartPrediction:
    """Fold family near mu = 1 in the chart eps~ = 1: mu~ = 1 + s^2, |s| <= 1."""
    return ChartPrediction(chart="eps_chart", s=s, mu=1.0 + s**2, eps=None,
                           fold_flag=s == 0.0)


def mu1_mu_chart(s: float) -> ChartPrediction:
    """Fold family near mu = 1 in the chart mu~ = 2: eps~ = 2 - s^2, |s| <= 2."""
    return ChartPrediction(chart="mu_chart", s=s, mu=None, eps=2.0 - s**2,
                           fold_flag=False)


def mu0_chart_overlap_roots() -> tuple[float, float]:
    """Parameters where the eps~=1 recruitment family reaches mu~ = 2.

    Roots of s^3 - 2 s + 1: s_- = (sqrt(5) - 1)/2 and s_+ = 1.
    """
    return ((np.sqrt(5.0) - 1.0) / 2.0, 1.0)


def mu0_normalization(spec: NonlinearitySpec) -> float:
    """Unit conversion for the mu=0 fold constant from normal-form variables.

    The (3/2) cbrt(2) constant holds after rescaling so that r_+(0) = 1 and
    the pitchfork expansion reads lambda(r, 0) r = -mu r + r^3.  For a raw
    nonlinearity with lambda(r, 0) ~ c3 r^2 and upper rest root b = r_+(0),
    the inhomogeneous recruitment balance -mu r + c3 r^3 + eps b = 0 folds
    at mu = [(3/2) sqrt(3 c3) b]^(2/3) eps^(2/3), i.e. the normal-form
    constant times (b sqrt(c3))^(2/3).  The quintic gives
    (sqrt(2) sqrt(2))^(2/3) = 2^(2/3), hence mu_fold -> 3 eps^(2/3).
    """
    h = 1e-4
    c3 = (float(spec.lam(h, 0.0)) - float(spec.lam(0.0, 0.0))) / h**2
    if c3 <= 0.0:
        raise AsymptoticsError(
            "lambda(r, 0) must grow quadratically for the recruitment fold"
        )
    b = rest_state_roots(spec)[1]
    return float((b * np.sqrt(c3)) ** (2.0 / 3.0))


@dataclass(frozen=True)
class MismatchReport:
    mu: float
    delta: float                 # |omega1(r-) - omega1(r+)|
    threshold: float             # r+ / r-
    obstructed: bool
    sin_phi_limit: float         # (r-/r+)(omega1(r-) - omega1(r+))
    has_real_solution: bool      # |sin_phi_limit| <= 1
    o1_mismatch: bool            # omega(r-, mu, 0) != omega(r+, mu, 0)


def mismatch_bound(spec: NonlinearitySpec, mu: float) -> MismatchReport:
    """Frequency-mismatch obstruction for mixed r+/r- patterns.

    A pattern with a long r+ block followed by one r- node forces the
    interface phase toward sin(phi_k) = (r-/r+)(omega1(r-) - omega1(r+));
    no such phase exists once |omega1(r-) - omega1(r+)| exceeds r+/r-.
    """
    prof = bistable_roots(spec, mu)
    w1m = float(spec.omega1(prof.r_minus, mu, 0.0))
    w1p = float(spec.omega1(prof.r_plus, mu, 0.0))
    delta = abs(w1m - w1p)
    threshold = prof.r_plus / prof.r_minus
    sin_phi = (prof.r_minus / prof.r_plus) * (w1m - w1p)
    om = float(spec.omega(prof.r_minus, mu, 0.0)) - float(spec.omega(prof.r_plus, mu, 0.0))
    return MismatchReport(
        mu=float(mu),
        delta=delta,
        threshold=threshold,
        obstructed=delta > threshold,
        sin_phi_limit=sin_phi,
        has_real_solution=abs(sin_phi) <= 1.0,
        o1_mismatch=abs(om) > 1e-10,
    )


@dataclass(frozen=True)
class RecruitmentPrediction:
    kappa: int
    k: int
    fold_node_mu1: int      # node folding first as mu -> 1
    recruited_node_mu0: int  # node switched on near mu = 0


def conservative_recruitment(kappa: int, k: int) -> RecruitmentPrediction:
    """Which node folds near mu=1 / recruits near mu=0 on a conservative branch.

    For k active nodes whose last interface phase is kappa*pi/2: kappa=-1
    (all interfaces -pi/2) folds node k, kappa=+1 folds node k-1.  Near
    mu=0, phi_{k-1} = +pi/2 recruits node k while phi_{k-1} = -pi/2 with
    phi_k = +pi/2 recruits node k+1.
    """
    if kappa not in (-1, 1):
        raise AsymptoticsError(f"kappa must be -1 or +1, got {kappa}")
    if k < 2:
        raise AsymptoticsError(f"need k >= 2, got {k}")
    fold_node = k if kappa == -1 else k - 1
    recruited = k if kappa == 1 else k + 1
    return RecruitmentPrediction(kappa=kappa, k=k, fold_node_mu1=fold_node,
                                 recruited_node_mu0=recruited)


@dataclass(frozen=True)
class PhaseBlockDeterminant:
    value: float
    nonsingular: bool


def phase_block_determinant(r0, bc: BoundaryKind) -> PhaseBlockDeterminant:
    """Closed-form reference determinant of the core phase block.

    det(A_off) = (-1)^(k+1) (prod_{n=1}^{k-1} r0_n) sum_{n=0}^{k} r0_n^2 and
    det(A_on) = (-1)^(k+1) (r0_0^2 + 2 sum_{n=1}^{k} r0_n^2) prod r0_n, with
    the ghost r0_0 from the boundary kind.  These reference formulas differ
    from the directly assembled block (see ``core_phase_block``) by a
    normalization of the underlying matrices; the nonsingularity verdict
    (all roots nonzero) is the operative content.
    """
    r0 = np.asarray(r0, dtype=float)
    k = r0.size
    ghost = _left_ghost_root(r0, bc)
    sign = (-1.0) ** (k + 1)
    prod = float(np.prod(r0[: k - 1])) if k >= 2 else 1.0
    if bc is BoundaryKind.OFF_SITE:
        value = sign * prod * (ghost**2 + float(np.sum(r0**2)))
    else:
        value = sign * (ghost**2 + 2.0 * float(np.sum(r0**2))) * prod
    return PhaseBlockDeterminant(value=value, nonsingular=bool(np.all(r0 != 0.0)))


def core_phase_block(r0, bc: BoundaryKind) -> np.ndarray:
    """Directly assembled core phase-equation Jacobian wrt (Omega, phi).

    Row n: Omega column r0_n, column phi_n gets +r0_{n+1}, column phi_{n-1}
    gets -r0_{n-1} (with r0_{k+1} = 0 and the on-site ghost contributing
    +r0_2 to the phi_1 column of row 1).
    """
    r0 = np.asarray(r0, dtype=float)
    k = r0.size
    a = np.zeros((k, k))
    a[:, 0] = r0
    for n in range(1, k + 1):  # lattice numbering
        if n <= k - 1:
            a[n - 1, n] += r0[n] if n < k else 0.0
        if n >= 2:
            a[n - 1, n - 1] += -r0[n - 2]
    if bc is BoundaryKind.ON_SITE and k >= 2:
        a[0, 1] += r0[1]
    return a
