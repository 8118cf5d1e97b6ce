"""Finite-horizon solves and the closed-loop controller.

Each control step solves a finite-horizon problem over every stored terminal
candidate: steer to the candidate in exactly K steps, pay quadratic stage
costs on the way plus the candidate's recorded cost-to-go, and keep the
worst-case CVaR of the obstacle constraint within the risk budget at every
intermediate step. Candidates are screened with an exact lower bound from
the equality-constrained LQ relaxation, so most are pruned against the
incumbent before any constrained solve runs.

Incumbent plans are supplied by the caller: the time-shifted previous plan
extended along the safe set (steps t >= 1) and prefixes of stored
trajectories (step 0). They are feasible by construction, so the solver's
cost never exceeds theirs, which is what makes the closed-loop cost decrease
step over step and iteration over iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ocp import FACES, Scenario
from .qp import solve_qp
from .linprog import LpProblem, lp_solve
from .risk import AmbiguitySet, worst_case_cvar_full
from .safeset import SafeSet, SafeSetEntry, state_key
from .distributions import DiscreteDistribution

TOL_FEAS = 1e-6
TOL_DYN = 1e-8
TOL_BOX = 1e-8
TOL_TERM = 1e-9
RECON_TOL = 1e-8

AL_RHO0 = 100.0
AL_RHO_GROWTH = 4.0
AL_RHO_MAX = 1e8
AL_MAX_OUTER = 40
AL_STEP_TOL = 1e-9


class InfeasibleProblemError(RuntimeError):
    """No terminal candidate or incumbent admits a feasible plan."""


@dataclass(frozen=True)
class FhpSolution:
    """One finite-horizon plan: inputs, predicted states, and its cost.

    ``objective`` includes the terminal cost-to-go; ``states`` is the exact
    rollout of ``inputs`` and ends within the key tolerance of
    ``terminal_entry.state``.
    """

    inputs: np.ndarray
    states: np.ndarray
    objective: float
    terminal_entry: SafeSetEntry
    terminal_cost: float
    origin: str


@dataclass
class ClosedLoopTrajectory:
    """Record of one closed-loop run from start to goal."""

    states: np.ndarray
    inputs: np.ndarray
    sample_indices: np.ndarray
    stage_costs: np.ndarray
    collisions: np.ndarray
    j_values: np.ndarray
    shift_feasible: np.ndarray
    prefix_feasible: bool
    start_risk_ok: bool
    solve_steps: int
    steering_steps: int

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    @property
    def realized_cost(self) -> float:
        return float(self.stage_costs.sum())

    def pairs(self) -> list[tuple[np.ndarray, float]]:
        """(state, stage cost) pairs in safe-set append format."""
        out = [(self.states[t], float(self.stage_costs[t])) for t in range(self.horizon)]
        out.append((self.states[self.horizon], 0.0))
        return out


class RiskChecker:
    """Worst-case CVaR evaluations memoized by exact position.

    One checker serves one ambiguity set. States whose constraint values
    vanish on every atom short-circuit to zero without a linear program;
    everything else solves the dual program and caches value and tail
    weights.
    """

    def __init__(self, scenario: Scenario, amb: AmbiguitySet, beta: float):
        self.scenario = scenario
        self.amb = amb
        self.beta = float(beta)
        self._memo: dict[bytes, tuple[float, np.ndarray | None]] = {}

    def worst_case_full(self, x: np.ndarray) -> tuple[float, np.ndarray | None]:
        pos = np.ascontiguousarray(x[:2], dtype=float)
        key = pos.tobytes()
        hit = self._memo.get(key)
        if hit is None:
            values = self.scenario.risk_values(x)
            if float(values.max()) <= 0.0:
                hit = (0.0, None)
            else:
                hit = worst_case_cvar_full(values, self.amb, self.beta)
            self._memo[key] = hit
        return hit

    def worst_case(self, x: np.ndarray) -> float:
        return self.worst_case_full(x)[0]

    def satisfied(self, x: np.ndarray, delta: float, tol: float = TOL_FEAS) -> bool:
        return self.worst_case(x) <= delta + tol

    def position_gradient(self, x: np.ndarray) -> np.ndarray:
        """First-order model slope of the worst case w.r.t. position."""
        value, q = self.worst_case_full(x)
        grad = np.zeros(2)
        if value <= 0.0 or q is None:
            return grad
        values = self.scenario.risk_values(x)
        obstacle = self.scenario.obstacle
        for idx in np.flatnonzero(values > 0.0):
            face = obstacle.active_face(
                float(x[0]), float(x[1]),
                float(self.scenario.centers_x[idx]), float(self.scenario.centers_y[idx]),
            )
            grad -= q[idx] * FACES[face]
        return grad


def reconstruct_input(scenario: Scenario, x_from: np.ndarray, x_to: np.ndarray) -> tuple[np.ndarray, bool]:
    """Input mapping x_from onto x_to, and whether it does so within tolerance."""
    target = x_to - scenario.dynamics.a @ x_from
    u, *_ = np.linalg.lstsq(scenario.dynamics.b, target, rcond=None)
    residual = float(np.max(np.abs(scenario.dynamics.b @ u - target)))
    return u, residual <= RECON_TOL


class _HorizonData:
    """Condensed matrices for one finite-horizon solve from a fixed state."""

    def __init__(self, scenario: Scenario, horizon: int, x_init: np.ndarray):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.scenario = scenario
        self.horizon = horizon
        self.x_init = np.asarray(x_init, dtype=float)
        n, m = scenario.n_states, scenario.n_inputs
        a, b = scenario.dynamics.a, scenario.dynamics.b
        K = horizon

        self.apow = np.zeros((K + 1, n, n))
        self.apow[0] = np.eye(n)
        for k in range(1, K + 1):
            self.apow[k] = a @ self.apow[k - 1]
        self.fmats = np.zeros((K + 1, n, K * m))
        for k in range(1, K + 1):
            self.fmats[k] = a @ self.fmats[k - 1]
            self.fmats[k][:, (k - 1) * m : k * m] = b

        q_mat, r_mat = scenario.cost.q, scenario.cost.r
        goal = scenario.x_goal
        h = np.kron(np.eye(K), 2.0 * r_mat)
        f = np.zeros(K * m)
        c0 = 0.0
        for k in range(K):
            fk = self.fmats[k]
            gk = self.apow[k] @ self.x_init - goal
            h += 2.0 * fk.T @ q_mat @ fk
            f += 2.0 * fk.T @ q_mat @ gk
            c0 += float(gk @ q_mat @ gk)
        self.h = 0.5 * (h + h.T)
        self.f = f
        self.c0 = c0
        self.e_mat = self.fmats[K]
        self.r_base = self.apow[K] @ self.x_init

        rows = []
        rhs = []
        for k in range(1, K):
            xk0 = self.apow[k] @ self.x_init
            rows.append(self.fmats[k])
            rhs.append(scenario.state_box.upper - xk0)
            rows.append(-self.fmats[k])
            rhs.append(xk0 - scenario.state_box.lower)
        if rows:
            self.g_mat = np.vstack(rows)
            self.g_rhs = np.concatenate(rhs)
        else:
            self.g_mat = np.zeros((0, K * m))
            self.g_rhs = np.zeros(0)
        self.u_lower = np.tile(scenario.input_box.lower, K)
        self.u_upper = np.tile(scenario.input_box.upper, K)

        h_inv_f = np.linalg.solve(self.h, self.f)
        h_inv_et = np.linalg.solve(self.h, self.e_mat.T)
        self.lb_smat = np.linalg.pinv(self.e_mat @ h_inv_et)
        self.lb_vmin = c0 - 0.5 * float(self.f @ h_inv_f)
        self.lb_wbase = self.e_mat @ h_inv_f

        self.pos_rows = self.fmats[:, :2, :]
        self.pos_base = np.array([(self.apow[k] @ self.x_init)[:2] for k in range(K + 1)])

    def objective(self, u_flat: np.ndarray) -> float:
        return float(0.5 * u_flat @ self.h @ u_flat + self.f @ u_flat + self.c0)

    def lower_bounds(self, terminals: np.ndarray) -> np.ndarray:
        """LQ relaxation values for a batch of terminal states, shape (C,)."""
        w = (terminals - self.r_base[None, :]) + self.lb_wbase[None, :]
        return self.lb_vmin + 0.5 * np.einsum("ci,ij,cj->c", w, self.lb_smat, w)

    def states_of(self, u_flat: np.ndarray) -> np.ndarray:
        inputs = u_flat.reshape(self.horizon, self.scenario.n_inputs)
        return self.scenario.rollout(self.x_init, inputs)


def _plan_feasibility(
    data: _HorizonData,
    checker: RiskChecker,
    u_flat: np.ndarray,
    entry: SafeSetEntry,
    delta: float,
    tol_feas: float,
) -> tuple[bool, np.ndarray]:
    """Exact feasibility of a plan: boxes, terminal match, and risk rows."""
    scenario = data.scenario
    states = data.states_of(u_flat)
    K = data.horizon
    if np.max(u_flat - data.u_upper, initial=0.0) > TOL_BOX:
        return False, states
    if np.max(data.u_lower - u_flat, initial=0.0) > TOL_BOX:
        return False, states
    for k in range(1, K):
        if scenario.state_box.violation(states[k]) > TOL_BOX:
            return False, states
    if float(np.max(np.abs(states[K] - entry.state))) > TOL_TERM:
        return False, states
    for k in range(1, K):
        if not checker.satisfied(states[k], delta, tol_feas):
            return False, states
    return True, states


def _risk_rows(
    data: _HorizonData, checker: RiskChecker, u_flat: np.ndarray
) -> tuple[np.ndarray, list[tuple[int, np.ndarray, float]]]:
    """Exact worst-case values and linear models at the current iterate.

    Returns the worst-case value for each interior step and, for steps whose
    constraint is locally active, the slope of the first-order model.
    """
    states = data.states_of(u_flat)
    K = data.horizon
    wc = np.zeros(K - 1)
    models = []
    for k in range(1, K):
        value = checker.worst_case(states[k])
        wc[k - 1] = value
        if value > 0.0:
            grad = checker.position_gradient(states[k])
            models.append((k, grad, value))
    return wc, models


def _augmented_lagrangian(
    data: _HorizonData,
    checker: RiskChecker,
    u_start: np.ndarray,
    r_c: np.ndarray,
    delta: float,
    tol_feas: float,
) -> tuple[np.ndarray | None, float]:
    """Polish a plan until its exact risk rows hold; returns best feasible U."""
    K = data.horizon
    n_u = data.h.shape[0]
    n_xi = K - 1
    lam = np.zeros(n_xi)
    rho = AL_RHO0
    u_cur = u_start.copy()
    wc, models = _risk_rows(data, checker, u_cur)
    best_u = None
    best_val = np.inf
    prev_viol = np.inf

    for _ in range(AL_MAX_OUTER):
        viol = float(np.max(wc - delta, initial=0.0))
        if viol <= tol_feas:
            value = data.objective(u_cur)
            if value < best_val:
                best_val = value
                best_u = u_cur.copy()
        h_aug = np.zeros((n_u + n_xi, n_u + n_xi))
        h_aug[:n_u, :n_u] = data.h
        h_aug[n_u:, n_u:] = rho * np.eye(n_xi)
        f_aug = np.concatenate([data.f, lam])
        a_eq = np.hstack([data.e_mat, np.zeros((data.e_mat.shape[0], n_xi))])
        rows = [np.hstack([data.g_mat, np.zeros((data.g_mat.shape[0], n_xi))])]
        rhs = [data.g_rhs]
        for k, grad, value in models:
            row = np.zeros(n_u + n_xi)
            row[:n_u] = grad @ data.pos_rows[k]
            row[n_u + k - 1] = -1.0
            rows.append(row[None, :])
            rhs.append(np.array([delta - value + float(row[:n_u] @ u_cur)]))
        a_ub = np.vstack(rows)
        b_ub = np.concatenate(rhs)
        lower = np.concatenate([data.u_lower, -lam / rho])
        upper = np.concatenate([data.u_upper, np.full(n_xi, np.inf)])
        xi0 = np.maximum(wc - delta, -lam / rho)
        x0 = np.concatenate([u_cur, xi0])
        sol = solve_qp(h_aug, f_aug, x0=x0, a_eq=a_eq, b_eq=r_c, a_ub=a_ub, b_ub=b_ub, lower=lower, upper=upper)
        u_new = sol.x[:n_u]
        step = float(np.max(np.abs(u_new - u_cur), initial=0.0))
        u_cur = u_new
        wc, models = _risk_rows(data, checker, u_cur)
        new_viol = float(np.max(wc - delta, initial=0.0))
        lam = np.maximum(0.0, lam + rho * (wc - delta))
        if new_viol > 0.25 * prev_viol and rho < AL_RHO_MAX:
            rho *= AL_RHO_GROWTH
        prev_viol = max(new_viol, 1e-300)
        if new_viol <= tol_feas:
            value = data.objective(u_cur)
            if value < best_val:
                best_val = value
                best_u = u_cur.copy()
            if step <= AL_STEP_TOL:
                break
    return best_u, best_val


def solve_fhp(
    scenario: Scenario,
    safe_set: SafeSet,
    checker: RiskChecker,
    horizon: int,
    x_init: np.ndarray,
    delta: float,
    tol_feas: float = TOL_FEAS,
    incumbents: tuple[tuple[str, np.ndarray, SafeSetEntry], ...] = (),
) -> tuple[FhpSolution, dict[str, bool]]:
    """Best K-step plan into the safe set from ``x_init``.

    ``incumbents`` are candidate plans given as (tag, inputs, terminal
    entry); each is checked exactly and seeds the upper bound for candidate
    pruning. The returned flags record which incumbents were feasible. The
    solution cost never exceeds any feasible incumbent's cost.
    """
    data = _HorizonData(scenario, horizon, x_init)
    flags: dict[str, bool] = {}
    best_val = np.inf
    best_u: np.ndarray | None = None
    best_entry: SafeSetEntry | None = None
    best_origin = ""

    for tag, inputs, entry in incumbents:
        u_flat = np.asarray(inputs, dtype=float).reshape(-1)
        feasible, _ = _plan_feasibility(data, checker, u_flat, entry, delta, tol_feas)
        flags[tag] = flags.get(tag, False) or feasible
        if not feasible:
            continue
        q_val = safe_set.min_cost_to_go(entry.state)
        q_val = entry.cost_to_go if q_val is None else q_val
        total = data.objective(u_flat) + q_val
        if total < best_val:
            best_val = total
            best_u = u_flat.copy()
            best_entry = safe_set.best_entry(entry.state) or entry
            best_origin = tag

    candidates = safe_set.terminal_candidates()
    if candidates:
        terminals = np.array([e.state for e in candidates])
        costs = np.array([e.cost_to_go for e in candidates])
        bounds = data.lower_bounds(terminals) + costs
        order = np.argsort(bounds, kind="stable")
    else:
        order = np.array([], dtype=int)

    for idx in order:
        entry = candidates[int(idx)]
        if bounds[int(idx)] >= best_val - 1e-9:
            break
        r_c = entry.state - data.r_base
        lp = lp_solve(
            LpProblem(
                c=np.zeros(data.h.shape[0]),
                a_ub=data.g_mat if data.g_rhs.size else None,
                b_ub=data.g_rhs if data.g_rhs.size else None,
                a_eq=data.e_mat,
                b_eq=r_c,
                lower=data.u_lower,
                upper=data.u_upper,
            )
        )
        if lp.status != "optimal":
            continue
        qp_sol = solve_qp(
            data.h,
            data.f,
            x0=lp.z,
            a_eq=data.e_mat,
            b_eq=r_c,
            a_ub=data.g_mat if data.g_rhs.size else None,
            b_ub=data.g_rhs if data.g_rhs.size else None,
            lower=data.u_lower,
            upper=data.u_upper,
        )
        wc, _ = _risk_rows(data, checker, qp_sol.x)
        if float(np.max(wc - delta, initial=0.0)) <= tol_feas:
            total = data.objective(qp_sol.x) + entry.cost_to_go
            if total < best_val:
                best_val = total
                best_u = qp_sol.x.copy()
                best_entry = entry
                best_origin = "candidate"
            continue
        u_polished, value = _augmented_lagrangian(data, checker, qp_sol.x, r_c, delta, tol_feas)
        if u_polished is None:
            continue
        total = value + entry.cost_to_go
        if total < best_val:
            best_val = total
            best_u = u_polished
            best_entry = entry
            best_origin = "candidate"

    if best_u is None or best_entry is None:
        raise InfeasibleProblemError("no feasible plan into the safe set")

    states = data.states_of(best_u)
    solution = FhpSolution(
        inputs=best_u.reshape(horizon, scenario.n_inputs),
        states=states,
        objective=float(best_val),
        terminal_entry=best_entry,
        terminal_cost=float(best_entry.cost_to_go),
        origin=best_origin,
    )
    return solution, flags


def shift_incumbent(
    scenario: Scenario, safe_set: SafeSet, prev: FhpSolution
) -> tuple[str, np.ndarray, SafeSetEntry] | None:
    """Previous plan advanced one step and extended along the safe set."""
    entry = prev.terminal_entry
    goal_key = state_key(scenario.x_goal)
    horizon = prev.inputs.shape[0]
    if state_key(entry.state) == goal_key:
        u_tail = np.zeros(scenario.n_inputs)
        tail_entry = entry
    else:
        succ = safe_set.successor(entry)
        if succ is None:
            return None
        u_tail, ok = reconstruct_input(scenario, prev.states[horizon], succ.state)
        if not ok:
            return None
        tail_entry = safe_set.best_entry(succ.state) or succ
    inputs = np.vstack([prev.inputs[1:], u_tail[None, :]])
    return ("shift", inputs, tail_entry)


def prefix_incumbents(
    scenario: Scenario, safe_set: SafeSet, horizon: int
) -> list[tuple[str, np.ndarray, SafeSetEntry]]:
    """First K inputs of every stored trajectory, padded at the goal."""
    out = []
    for iteration in safe_set.live_iters:
        t_max = safe_set.max_time(iteration)
        if t_max == 0:
            continue
        states = [scenario.x_start]
        for t in range(1, min(t_max, horizon) + 1):
            states.append(safe_set.entry_at(iteration, t).state)
        inputs = []
        ok = True
        for k in range(horizon):
            if k + 1 <= t_max:
                u, good = reconstruct_input(scenario, states[k], states[k + 1])
                ok = ok and good
                inputs.append(u)
            else:
                states.append(scenario.x_goal)
                inputs.append(np.zeros(scenario.n_inputs))
        if not ok:
            continue
        terminal = safe_set.entry_at(iteration, min(horizon, t_max))
        tail_entry = safe_set.best_entry(terminal.state) or terminal
        out.append(("prefix", np.asarray(inputs), tail_entry))
    return out


def _steering_inputs(scenario: Scenario, x: np.ndarray) -> np.ndarray:
    """Minimum-norm input sequence landing exactly on the goal.

    Uses the shortest horizon whose reachability matrix has full row rank;
    raises if the resulting plan is not box-feasible or misses the goal.
    """
    a, b = scenario.dynamics.a, scenario.dynamics.b
    n = scenario.n_states
    blocks = [b]
    steps = 1
    while np.linalg.matrix_rank(np.hstack(blocks)) < n:
        steps += 1
        if steps > n:
            raise RuntimeError("dynamics are not controllable; cannot steer to the goal")
        blocks = [np.linalg.matrix_power(a, steps - 1 - j) @ b for j in range(steps)]
    e_mat = np.hstack(blocks)
    target = scenario.x_goal - np.linalg.matrix_power(a, steps) @ x
    u_flat, *_ = np.linalg.lstsq(e_mat, target, rcond=None)
    inputs = u_flat.reshape(steps, scenario.n_inputs)
    states = scenario.rollout(x, inputs)
    if float(np.max(np.abs(states[steps] - scenario.x_goal))) > TOL_TERM:
        raise RuntimeError("steering sequence misses the goal")
    for k in range(steps):
        if not scenario.input_box.contains(inputs[k], TOL_BOX):
            raise RuntimeError("steering input violates the input box")
        if not scenario.state_box.contains(states[k + 1], TOL_BOX):
            raise RuntimeError("steering state violates the state box")
    return inputs


def dr_mpc(
    scenario: Scenario,
    safe_set: SafeSet,
    amb: AmbiguitySet,
    true_dist: DiscreteDistribution,
    beta: float,
    delta: float,
    horizon: int,
    rng: np.random.Generator,
    eps_term: float = 1e-2,
    t_max: int = 500,
    tol_feas: float = TOL_FEAS,
) -> ClosedLoopTrajectory:
    """Run the controller from the start state until it reaches the goal.

    The loop solves finite-horizon problems until the state enters the
    terminal ball, then applies an exact steering tail onto the goal.
    Disturbances are drawn from ``true_dist`` one atom per step and paired
    with the state at which they were observed.
    """
    checker = RiskChecker(scenario, amb, beta)
    x = scenario.x_start.copy()
    start_risk_ok = checker.satisfied(x, delta, tol_feas)

    states = [x.copy()]
    inputs: list[np.ndarray] = []
    samples: list[int] = []
    stage_costs: list[float] = []
    collisions: list[bool] = []
    j_values: list[float] = []
    shift_flags: list[bool] = []
    prefix_flag = False
    prev: FhpSolution | None = None
    solve_steps = 0

    def advance(u: np.ndarray) -> None:
        nonlocal x
        w_idx = int(true_dist.sample_indices(rng, 1)[0])
        samples.append(w_idx)
        collisions.append(scenario.collision(x, w_idx))
        stage_costs.append(scenario.stage_cost(x, u))
        inputs.append(np.asarray(u, dtype=float).copy())
        x = scenario.step(x, u)
        states.append(x.copy())

    while float(np.linalg.norm(x - scenario.x_goal)) > eps_term:
        if len(inputs) >= t_max:
            raise RuntimeError(f"controller did not reach the goal within {t_max} steps")
        if prev is None:
            incumbents = tuple(prefix_incumbents(scenario, safe_set, horizon))
        else:
            shift = shift_incumbent(scenario, safe_set, prev)
            incumbents = (shift,) if shift is not None else ()
        sol, flags = solve_fhp(
            scenario, safe_set, checker, horizon, x, delta, tol_feas, incumbents
        )
        if prev is None:
            prefix_flag = flags.get("prefix", False)
        else:
            shift_flags.append(flags.get("shift", False))
        j_values.append(sol.objective)
        advance(sol.inputs[0])
        prev = sol
        solve_steps += 1

    steering_steps = 0
    if np.any(x != scenario.x_goal):
        steer = _steering_inputs(scenario, x)
        for k in range(steer.shape[0]):
            advance(steer[k])
        steering_steps = steer.shape[0]
        if float(np.max(np.abs(x - scenario.x_goal))) > TOL_TERM:
            raise RuntimeError("steering failed to land on the goal")
        x = scenario.x_goal.copy()
        states[-1] = x.copy()

    return ClosedLoopTrajectory(
        states=np.asarray(states),
        inputs=np.asarray(inputs).reshape(len(inputs), scenario.n_inputs),
        sample_indices=np.asarray(samples, dtype=np.int64),
        stage_costs=np.asarray(stage_costs),
        collisions=np.asarray(collisions, dtype=bool),
        j_values=np.asarray(j_values),
        shift_feasible=np.asarray(shift_flags, dtype=bool),
        prefix_feasible=prefix_flag,
        start_risk_ok=bool(start_risk_ok),
        solve_steps=solve_steps,
        steering_steps=steering_steps,
    )


def lyapunov_violation(traj: ClosedLoopTrajectory) -> float:
    """Largest violation of J(t+1) <= J(t) - stage cost over solve steps."""
    worst = -np.inf
    for t in range(traj.solve_steps - 1):
        worst = max(worst, traj.j_values[t + 1] - (traj.j_values[t] - traj.stage_costs[t]))
    return worst if np.isfinite(worst) else 0.0
