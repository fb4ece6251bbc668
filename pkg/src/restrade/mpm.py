"""Multi-preference matching: build and maximize the satisfaction objective.

Within the per-pair proportion cap ``u`` (below which delay and energy stay
inside their tolerances) each pair contributes a concave quadratic
``(a - b*x) * x`` to the objective, so the match is a concave QP over row
budgets, per-service cache capacities, and the box ``[0, u]``.  ``solve``
runs a dual warm start followed by monotone projected-gradient ascent;
``oracle_solve`` exhaustively grids tiny instances against the raw
indicator-bearing objective as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import MarketInstance, Requirement, ServiceOffer
from .scoring import MatchMatrix, objective_batch, pair_tables

_BISECT_ITERS = 60
_WARMUP_SWEEPS = 400
_PROJECTION_ROUNDS = 3
_BACKTRACK_LIMIT = 50
ORACLE_PAIR_LIMIT = 6


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 10_000
    tolerance: float = 1e-6       # stop once an ascent step improves less than this
    oracle_grid_steps: int = 10   # grid resolution per pair in oracle_solve

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.oracle_grid_steps < 2:
            raise ValueError("oracle_grid_steps must be >= 2")


@dataclass(frozen=True)
class QpProblem:
    """Concave quadratic objective sum((linear - curvature*x)*x) plus constraints.

    Feasible set: 0 <= x <= upper, row sums <= 1, and per-column
    sum_i task_size[i]*x[i,j] <= cache_size[j].
    """

    linear: np.ndarray      # (m, n), per-pair a
    curvature: np.ndarray   # (m, n), per-pair b >= 0
    upper: np.ndarray       # (m, n), per-pair proportion cap in [0, 1]
    task_size: np.ndarray   # (m,)
    cache_size: np.ndarray  # (n,)

    @property
    def shape(self) -> tuple[int, int]:
        return self.linear.shape

    def objective(self, x: np.ndarray) -> float:
        return float(((self.linear - self.curvature * x) * x).sum())

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.linear - 2.0 * self.curvature * x

    def grid_gap_bound(self, grid_steps: int) -> float:
        """Upper bound on continuous-vs-grid optimum gap for ``oracle_solve``.

        Rounding each coordinate of the true maximizer down to the grid stays
        feasible and moves the objective by at most the per-pair gradient
        bound times one grid spacing.
        """
        slope = np.maximum(np.abs(self.linear),
                           np.abs(self.linear - 2.0 * self.curvature * self.upper))
        return float((slope * self.upper / grid_steps).sum())

    def feasible(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        m, n = self.shape
        if x.shape != (m, n):
            return False
        if x.size == 0:
            return True
        return bool(
            (x >= -tol).all() and (x <= self.upper + tol).all()
            and (x.sum(axis=1) <= 1.0 + tol).all()
            and ((self.task_size[:, None] * x).sum(axis=0) <= self.cache_size + tol).all()
        )


@dataclass(frozen=True)
class SolveResult:
    match: MatchMatrix
    converged: bool
    iterations: int
    objective: float
    objective_history: tuple[float, ...]


def pair_upper_bound(req: Requirement, svc: ServiceOffer) -> float:
    """Largest proportion keeping the pair inside its delay and energy limits."""
    unit_delay = req.task_size / svc.tx_rate + req.cpu_cycles / svc.cpu_freq
    unit_energy = (svc.tx_energy_rate * req.task_size / svc.tx_rate
                   + svc.exe_energy_rate * req.cpu_cycles / svc.cpu_freq)
    u = min(1.0, req.max_delay / unit_delay)
    if unit_energy > 0:
        u = min(u, svc.max_energy / unit_energy)
    return u


def build_qp(instance: MarketInstance) -> QpProblem:
    """Expand the satisfaction objective into per-pair quadratic coefficients.

    Only the delay and energy components vary with the proportion (both
    affine decreasing), so within ``[0, upper]`` the pair contribution is
    exactly ``(a - b*x) * x`` with ``b >= 0``.
    """
    tb = pair_tables(instance)
    m, n = instance.m, instance.n
    w = instance.config.weights
    phi, psi = w.service_pref, w.requirement_pref

    if m == 0 or n == 0:
        empty = np.zeros((m, n))
        return QpProblem(empty, empty.copy(), empty.copy(), tb.task_size, tb.cache_size)

    sps_const = phi[0] + phi[1] * tb.sps_price + phi[2] * tb.collaborator_reputation[None, :]
    rps_const = psi[0] + psi[1] * tb.rps_price + psi[2] * tb.requester_reputation[:, None]
    sps_slope = phi[0] * tb.unit_delay / tb.max_delay[:, None]
    rps_slope = psi[0] * tb.unit_energy / tb.max_energy[None, :]

    wr = w.requester_weight / m
    wc = w.collaborator_weight / n
    linear = wr * sps_const + wc * rps_const
    curvature = wr * sps_slope + wc * rps_slope

    with np.errstate(divide="ignore"):
        delay_cap = tb.max_delay[:, None] / tb.unit_delay
        energy_cap = np.where(tb.unit_energy > 0, tb.max_energy[None, :] / tb.unit_energy, np.inf)
    upper = np.minimum(1.0, np.minimum(delay_cap, energy_cap))

    return QpProblem(linear, curvature, upper, tb.task_size, tb.cache_size)


def _project_rows(v: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Per-row Euclidean projection onto {0 <= x <= upper, sum(x) <= 1}."""
    x = np.clip(v, 0.0, upper)
    over = x.sum(axis=1) > 1.0
    if not over.any():
        return x
    vi, ui = v[over], upper[over]
    lo = np.zeros(vi.shape[0])
    hi = vi.max(axis=1)  # shifts every entry to <= 0, so the sum reaches 0
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        total = np.clip(vi - mid[:, None], 0.0, ui).sum(axis=1)
        too_big = total > 1.0
        lo = np.where(too_big, mid, lo)
        hi = np.where(too_big, hi, mid)
    x[over] = np.clip(vi - hi[:, None], 0.0, ui)  # hi end keeps sums <= 1
    return x


def _project_cols(v: np.ndarray, upper: np.ndarray, task_size: np.ndarray,
                  cache_size: np.ndarray) -> np.ndarray:
    """Per-column projection onto {0 <= x <= upper, sum(task_size*x) <= cache}.

    Never increases an entry of an already box-feasible input, so applying it
    after `_project_rows` preserves row feasibility.
    """
    x = np.clip(v, 0.0, upper)
    load = (task_size[:, None] * x).sum(axis=0)
    over = load > cache_size
    if not over.any():
        return x
    vj, uj = x[:, over], upper[:, over]
    cap = cache_size[over]
    s = task_size[:, None]
    lo = np.zeros(vj.shape[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = np.where(s > 0, vj / s, 0.0).max(axis=0)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        total = (s * np.clip(vj - mid[None, :] * s, 0.0, uj)).sum(axis=0)
        too_big = total > cap
        lo = np.where(too_big, mid, lo)
        hi = np.where(too_big, hi, mid)
    x[:, over] = np.clip(vj - hi[None, :] * s, 0.0, uj)
    return x


def _project(qp: QpProblem, v: np.ndarray) -> np.ndarray:
    """Feasible point near ``v`` via alternating row/column projections.

    The final column pass only shrinks entries, so the result satisfies both
    constraint families exactly.
    """
    x = v
    for _ in range(_PROJECTION_ROUNDS):
        x = _project_rows(x, qp.upper)
        x = _project_cols(x, qp.upper, qp.task_size, qp.cache_size)
    return x


def _dual_primal(qp: QpProblem, row_mult: np.ndarray, col_mult: np.ndarray) -> np.ndarray:
    coef = qp.linear - row_mult[:, None] - col_mult[None, :] * qp.task_size[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        interior = np.where(qp.curvature > 0, coef / (2.0 * qp.curvature), np.inf)
    x = np.clip(interior, 0.0, qp.upper)
    return np.where((qp.curvature == 0) & (coef <= 0), 0.0, x)


def _warm_start(qp: QpProblem) -> np.ndarray:
    """Near-optimal start via alternating exact dual updates.

    For fixed column multipliers the row multipliers decouple (and vice
    versa), so each half-sweep is an exact block minimization of the dual,
    done by vectorized bisection on the complementary-slackness targets.
    """
    m, n = qp.shape
    row_mult = np.zeros(m)
    col_mult = np.zeros(n)
    s = qp.task_size[:, None]

    for _ in range(_WARMUP_SWEEPS):
        # rows: smallest multiplier bringing each row budget within 1
        base = qp.linear - col_mult[None, :] * s
        x0 = _dual_primal(qp, np.zeros(m), col_mult)
        over = x0.sum(axis=1) > 1.0 + 1e-12
        new_rows = np.zeros(m)
        if over.any():
            lo = np.zeros(int(over.sum()))
            hi = np.maximum(base[over].max(axis=1), 0.0)
            for _ in range(_BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                coef = base[over] - mid[:, None]
                with np.errstate(divide="ignore", invalid="ignore"):
                    xi = np.where(qp.curvature[over] > 0,
                                  coef / (2.0 * qp.curvature[over]), np.inf)
                xi = np.clip(xi, 0.0, qp.upper[over])
                xi = np.where((qp.curvature[over] == 0) & (coef <= 0), 0.0, xi)
                too_big = xi.sum(axis=1) > 1.0
                lo = np.where(too_big, mid, lo)
                hi = np.where(too_big, hi, mid)
            new_rows[over] = hi
        row_change = np.abs(new_rows - row_mult).max(initial=0.0)
        row_mult = new_rows

        # columns: smallest multiplier bringing each cache load within capacity
        base = qp.linear - row_mult[:, None]
        x0 = _dual_primal(qp, row_mult, np.zeros(n))
        over = (s * x0).sum(axis=0) > qp.cache_size + 1e-12
        new_cols = np.zeros(n)
        if over.any():
            lo = np.zeros(int(over.sum()))
            with np.errstate(divide="ignore", invalid="ignore"):
                hi = np.maximum(np.where(s > 0, base[:, over] / s, 0.0).max(axis=0), 0.0)
            for _ in range(_BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                coef = base[:, over] - mid[None, :] * s
                with np.errstate(divide="ignore", invalid="ignore"):
                    xj = np.where(qp.curvature[:, over] > 0,
                                  coef / (2.0 * qp.curvature[:, over]), np.inf)
                xj = np.clip(xj, 0.0, qp.upper[:, over])
                xj = np.where((qp.curvature[:, over] == 0) & (coef <= 0), 0.0, xj)
                too_big = (s * xj).sum(axis=0) > qp.cache_size[over]
                lo = np.where(too_big, mid, lo)
                hi = np.where(too_big, hi, mid)
            new_cols[over] = hi
        col_change = np.abs(new_cols - col_mult).max(initial=0.0)
        col_mult = new_cols

        if max(row_change, col_change) < 1e-12:
            break

    return _project(qp, _dual_primal(qp, row_mult, col_mult))


def solve(instance: MarketInstance, cfg: SolverConfig | None = None) -> SolveResult:
    """Maximize the match objective over the feasible proportions.

    The returned matrix is feasible (rows, caches, and per-pair caps) and its
    objective sequence is nondecreasing across ascent iterations.  The
    ``converged`` flag is False only when the iteration limit stops ascent
    while steps are still improving by more than the tolerance.
    """
    return maximize(build_qp(instance), cfg or SolverConfig())


def maximize(qp: QpProblem, cfg: SolverConfig) -> SolveResult:
    """Ascend the quadratic objective from a dual warm start."""
    m, n = qp.shape
    if m == 0 or n == 0 or qp.upper.size == 0:
        return SolveResult(MatchMatrix.zeros(m, n), True, 0, 0.0, (0.0,))

    x = _warm_start(qp)
    best = qp.objective(x)
    history = [best]
    lipschitz = max(float(2.0 * qp.curvature.max()), 1e-9)
    step = 1.0 / lipschitz
    converged = False
    iterations = 0

    for _ in range(cfg.max_iterations):
        iterations += 1
        grad = qp.gradient(x)
        improved = False
        for _ in range(_BACKTRACK_LIMIT):
            candidate = _project(qp, x + step * grad)
            value = qp.objective(candidate)
            if value > best:
                improved = True
                break
            step *= 0.5
        if not improved:
            converged = True  # no feasible ascent step at any scale
            break
        gain = value - best
        x, best = candidate, value
        history.append(best)
        step *= 1.4
        if gain < cfg.tolerance:
            converged = True
            break

    return SolveResult(MatchMatrix(x), converged, iterations, best, tuple(history))


def oracle_solve(instance: MarketInstance, cfg: SolverConfig | None = None) -> MatchMatrix:
    """Exhaustive grid search over per-pair proportions for tiny instances.

    Evaluates the raw indicator-bearing objective (via the scoring module,
    independent of the quadratic expansion) on every feasible combination of
    per-pair grid points {0, u/g, ..., u} and returns the first maximizer.
    """
    cfg = cfg or SolverConfig()
    m, n = instance.m, instance.n
    if m == 0 or n == 0:
        return MatchMatrix.zeros(m, n)
    if m * n > ORACLE_PAIR_LIMIT:
        raise ValueError(f"oracle_solve supports at most {ORACLE_PAIR_LIMIT} pairs, got {m * n}")

    steps = cfg.oracle_grid_steps
    upper = np.array([[pair_upper_bound(r, c) for c in instance.services]
                      for r in instance.requirements])
    grids = [np.linspace(0.0, upper.flat[k], steps + 1) for k in range(m * n)]
    mesh = np.meshgrid(*grids, indexing="ij")
    candidates = np.stack([g.ravel() for g in mesh], axis=-1).reshape(-1, m, n)

    task = np.array([r.task_size for r in instance.requirements])
    cache = np.array([c.cache_size for c in instance.services])
    row_ok = candidates.sum(axis=2).max(axis=1) <= 1.0 + 1e-9
    load = (task[None, :, None] * candidates).sum(axis=1)
    col_ok = (load <= cache[None, :] + 1e-9).all(axis=1)
    candidates = candidates[row_ok & col_ok]

    tables = pair_tables(instance)
    best_value = -np.inf
    best = np.zeros((m, n))
    chunk = 65536
    for start in range(0, candidates.shape[0], chunk):
        block = candidates[start:start + chunk]
        values = objective_batch(instance, block, tables)
        k = int(values.argmax())
        if values[k] > best_value:
            best_value = float(values[k])
            best = block[k]
    return MatchMatrix(best)
