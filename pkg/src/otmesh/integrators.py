"""Flows and boundary-value solvers for the midpoint variational integrator.

The continuous reference flow integrates Newton's equation m x'' = -grad V(x)
with fixed-substep RK4 and serves as the oracle.  The discrete flow marches
the three-term midpoint stationarity recurrence

    m (x_j - x_{j-1})/dt- - m (x_{j+1} - x_j)/dt+
        = (dt-/2) grad V((x_{j-1}+x_j)/2) + (dt+/2) grad V((x_j+x_{j+1})/2)

and the boundary-value solver finds stationary (and, by default, minimizing)
nodal trajectories of the midpoint action with pinned endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BlowUpError, NewtonError
from .models import LagrangianModel, as_point
from .paths import Path, PhasePoint, TimeGrid, midpoint_action, uniform_distance


@dataclass(frozen=True)
class FlowResult:
    """Trajectory produced by a flow map, with its terminal phase point."""

    path: Path
    final_state: PhasePoint
    newton_iterations_max: int


@dataclass(frozen=True)
class BvpResult:
    """Two-point boundary solve: trajectory, its midpoint action, residual."""

    path: Path
    cost: float
    residual: float
    converged: bool
    newton_iterations: int
    multiplicity: int = 1
    message: str = ""


def _hessian_at(model: LagrangianModel, x: np.ndarray) -> np.ndarray:
    """Analytic Hessian when available, else forward differences of the gradient."""
    if model.hess_potential is not None:
        return np.asarray(model.hess_potential(x), dtype=float).reshape(x.size, x.size)
    step = 1e-7 * max(1.0, float(np.max(np.abs(x))))
    g0 = np.asarray(model.grad_potential(x), dtype=float)
    H = np.empty((x.size, x.size))
    for i in range(x.size):
        xi = x.copy()
        xi[i] += step
        H[:, i] = (np.asarray(model.grad_potential(xi), dtype=float) - g0) / step
    return H


def reference_flow(
    model: LagrangianModel,
    start: PhasePoint,
    grid: TimeGrid,
    substeps_per_interval: int = 16,
    guard_radius: float = 1e6,
) -> FlowResult:
    """Integrate m x'' = -grad V(x) with classical RK4, sampled on the grid.

    At least 16 substeps per grid interval keep the O(dt^4) integrator error
    negligible against the O(h) / O(h^2) effects it is used to referee.  A
    trajectory leaving the guard radius raises BlowUpError instead of being
    clamped; for the quadratic-growth model family the flow is complete, so
    blow-up indicates a modelling or usage error.
    """
    if substeps_per_interval < 16:
        raise ValueError("reference flow requires at least 16 substeps per interval")
    m = model.mass
    x = start.position.copy()
    v = start.velocity.copy()
    nodes = np.empty((grid.n_intervals + 1, x.size))
    nodes[0] = x
    for j, dt in enumerate(grid.spacings):
        sub = dt / substeps_per_interval
        for _ in range(substeps_per_interval):
            k1x = v
            k1v = -np.asarray(model.grad_potential(x), dtype=float) / m
            x2 = x + 0.5 * sub * k1x
            k2x = v + 0.5 * sub * k1v
            k2v = -np.asarray(model.grad_potential(x2), dtype=float) / m
            x3 = x + 0.5 * sub * k2x
            k3x = v + 0.5 * sub * k2v
            k3v = -np.asarray(model.grad_potential(x3), dtype=float) / m
            x4 = x + sub * k3x
            k4x = v + sub * k3v
            k4v = -np.asarray(model.grad_potential(x4), dtype=float) / m
            x = x + (sub / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            v = v + (sub / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            if np.max(np.abs(x)) > guard_radius:
                raise BlowUpError(
                    f"trajectory left the guard radius {guard_radius:g} "
                    f"within grid interval {j}"
                )
        nodes[j + 1] = x
    return FlowResult(Path(grid, nodes), PhasePoint(x, v), 0)


def _el_step(
    model: LagrangianModel,
    prev: np.ndarray,
    curr: np.ndarray,
    dt_prev: float,
    dt_next: float,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, int]:
    """Newton solve of the implicit midpoint step; returns (next, iterations)."""
    m = model.mass
    outgoing = m * (curr - prev) / dt_prev - 0.5 * dt_prev * np.asarray(
        model.grad_potential(0.5 * (prev + curr)), dtype=float
    )
    # evaluating the residual costs eps * m |x| / dt of noise per momentum
    # term; the tolerance cannot be tighter than that floor
    noise = (
        64.0
        * np.finfo(float).eps
        * m
        / min(dt_prev, dt_next)
        * max(1.0, float(np.max(np.abs(prev))), float(np.max(np.abs(curr))))
    )
    scale = max(1.0, float(np.max(np.abs(outgoing))), noise / tol)
    z = curr + (curr - prev) * (dt_next / dt_prev)
    eye = np.eye(curr.size)
    for it in range(max_iter + 1):
        mid = 0.5 * (curr + z)
        resid = (
            m * (z - curr) / dt_next
            + 0.5 * dt_next * np.asarray(model.grad_potential(mid), dtype=float)
            - outgoing
        )
        err = float(np.max(np.abs(resid)))
        if err <= tol * scale:
            return z, it
        if it == max_iter:
            raise NewtonError(
                f"implicit midpoint step did not converge in {max_iter} iterations "
                f"(residual {err:.3e})",
                residual=err,
            )
        jac = (m / dt_next) * eye + 0.25 * dt_next * _hessian_at(model, mid)
        if curr.size == 1:
            z = z - resid / jac[0, 0]
        else:
            z = z - np.linalg.solve(jac, resid)
    raise AssertionError("unreachable")


def discrete_el_step(
    model: LagrangianModel,
    prev,
    curr,
    dt_prev: float,
    dt_next: float,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> np.ndarray:
    """Advance the midpoint three-term recurrence by one node."""
    prev, curr = as_point(prev), as_point(curr)
    if prev.shape != curr.shape:
        raise ValueError("prev and curr have different dimensions")
    if dt_prev <= 0 or dt_next <= 0:
        raise ValueError("time steps must be positive")
    nxt, _ = _el_step(model, prev, curr, dt_prev, dt_next, tol, max_iter)
    return nxt


def discrete_flow(
    model: LagrangianModel,
    start: PhasePoint,
    grid: TimeGrid,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> FlowResult:
    """March the discrete stationarity recurrence from (x, v).

    Initialization pins the first difference quotient to the launch velocity:
    x_1 = x + v (t_1 - t_0).  The terminal velocity is the last difference
    quotient.
    """
    dt = grid.spacings
    nodes = np.empty((grid.n_intervals + 1, start.dim))
    nodes[0] = start.position
    nodes[1] = start.position + start.velocity * dt[0]
    iters_max = 0
    for j in range(1, grid.n_intervals):
        nodes[j + 1], iters = _el_step(
            model, nodes[j - 1], nodes[j], dt[j - 1], dt[j], tol, max_iter
        )
        iters_max = max(iters_max, iters)
    v_final = (nodes[-1] - nodes[-2]) / dt[-1]
    return FlowResult(Path(grid, nodes), PhasePoint(nodes[-1], v_final), iters_max)


def _interior_defects(
    model: LagrangianModel, nodes: np.ndarray, dt: np.ndarray
) -> np.ndarray:
    """Stationarity defect of the midpoint action at every interior node."""
    m = model.mass
    momenta = m * np.diff(nodes, axis=0) / dt[:, None]
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    grads = np.asarray(model.grad_potential(mids), dtype=float)
    forces = 0.5 * dt[:, None] * grads
    return momenta[:-1] - momenta[1:] - forces[:-1] - forces[1:]


def el_residual(model: LagrangianModel, path: Path) -> float:
    """Max interior-node norm of the discrete stationarity defect."""
    if path.grid.n_intervals < 2:
        raise ValueError("residual needs at least two intervals")
    defects = _interior_defects(model, path.nodes, path.grid.spacings)
    return float(np.max(np.linalg.norm(defects, axis=1)))


def _bvp_jacobian(
    model: LagrangianModel, nodes: np.ndarray, dt: np.ndarray
) -> sp.csc_matrix:
    """Block-tridiagonal Jacobian of the stacked interior defects."""
    m = model.mass
    n = nodes.shape[1]
    l = dt.size
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    # d(force term)/d(node) on interval j contributes (dt_j/4) Hess V(mid_j)
    hess = np.empty((l, n, n))
    for j in range(l):
        hess[j] = 0.25 * dt[j] * _hessian_at(model, mids[j])
    eye = np.eye(n)
    rows, cols, data = [], [], []

    def add_block(bi: int, bj: int, block: np.ndarray) -> None:
        r = np.repeat(np.arange(n), n) + bi * n
        c = np.tile(np.arange(n), n) + bj * n
        rows.append(r)
        cols.append(c)
        data.append(block.ravel())

    for j in range(1, l):  # interior node index, block row j-1
        bi = j - 1
        diag = (m / dt[j - 1] + m / dt[j]) * eye - hess[j - 1] - hess[j]
        add_block(bi, bi, diag)
        if j - 1 >= 1:
            add_block(bi, bi - 1, -(m / dt[j - 1]) * eye - hess[j - 1])
        if j + 1 <= l - 1:
            add_block(bi, bi + 1, -(m / dt[j]) * eye - hess[j])
    size = (l - 1) * n
    return sp.csc_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )


def _bvp_newton(
    model: LagrangianModel,
    nodes: np.ndarray,
    dt: np.ndarray,
    tol: float,
    max_iter: int,
    scale: float,
) -> tuple[np.ndarray, float, int, bool]:
    """Damped Newton on the stacked system; returns (nodes, residual, iters, ok)."""
    l = dt.size
    n = nodes.shape[1]
    defects = _interior_defects(model, nodes, dt)
    err = float(np.max(np.abs(defects)))
    for it in range(max_iter):
        if err <= tol * scale:
            return nodes, err, it, True
        jac = _bvp_jacobian(model, nodes, dt)
        step = spla.spsolve(jac, -defects.ravel()).reshape(l - 1, n)
        phi = 0.5 * float(np.sum(defects * defects))
        t = 1.0
        while True:  # Armijo backtracking on the squared residual
            trial = nodes.copy()
            trial[1:-1] += t * step
            trial_defects = _interior_defects(model, trial, dt)
            trial_phi = 0.5 * float(np.sum(trial_defects * trial_defects))
            if trial_phi <= phi * (1.0 - 1e-4 * t) or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12:
            return nodes, err, it, False
        nodes, defects = trial, trial_defects
        err = float(np.max(np.abs(defects)))
    return nodes, err, max_iter, err <= tol * scale


def _cluster_paths(paths: list[Path], threshold: float) -> list[list[int]]:
    """Greedy clustering of paths by sup-distance below the threshold."""
    clusters: list[list[int]] = []
    for i, p in enumerate(paths):
        for members in clusters:
            if uniform_distance(p, paths[members[0]]) <= threshold:
                members.append(i)
                break
        else:
            clusters.append([i])
    return clusters


def solve_bvp(
    model: LagrangianModel,
    x,
    y,
    grid: TimeGrid,
    init: Path | None = None,
    tol: float = 1e-12,
    max_iter: int = 50,
    check_minimum: bool = True,
    n_perturbations: int = 20,
    n_restarts: int = 0,
    cluster_threshold: float = 1e-3,
    rng: np.random.Generator | None = None,
) -> BvpResult:
    """Connect x to y by a stationary trajectory of the midpoint action.

    Parameters
    ----------
    init
        Warm-start path (resampled onto the grid); default is the straight
        line from x to y.
    check_minimum
        Reject saddle points by verifying the action does not decrease under
        ``n_perturbations`` random nodal perturbations of size h^2.  Failure
        is reported through ``converged=False`` with a diagnostic message,
        not by raising.
    n_restarts
        Additional solves from randomized warm starts.  Solutions are
        clustered by sup-distance at ``cluster_threshold``; the lowest-cost
        cluster is returned and the cluster count reported as multiplicity.
        Useful near conjugate spans where minimizers are non-unique.

    The solve works on the full stacked interior system (not shooting), with
    Armijo-damped Newton steps; the Jacobian is assembled sparse and
    block-tridiagonal.

    Returns
    -------
    BvpResult
        Path with endpoints pinned exactly to the inputs, its midpoint action
        as cost, and the terminal max-norm residual.
    """
    x, y = as_point(x), as_point(y)
    if x.shape != y.shape:
        raise ValueError("endpoints have different dimensions")
    rng = rng if rng is not None else np.random.default_rng(0)
    dt = grid.spacings
    l = grid.n_intervals
    # same evaluation-noise floor as the single step: residual components are
    # differences of momenta of size m |x| / dt known only to eps relative
    noise = (
        64.0
        * np.finfo(float).eps
        * model.mass
        / float(np.min(dt))
        * max(1.0, float(np.max(np.abs(x))), float(np.max(np.abs(y))))
    )
    scale = max(
        1.0, model.mass * float(np.max(np.abs(y - x))) / grid.span, noise / tol
    )

    line = Path.line(grid, x, y)
    if l == 1:
        return BvpResult(line, midpoint_action(model, line), 0.0, True, 0)

    def initial_nodes(path: Path | None, noise: float) -> np.ndarray:
        base = line.nodes if path is None else path.evaluate(grid.nodes)
        nodes = np.array(base, dtype=float)
        nodes[0], nodes[-1] = x, y
        if noise > 0.0:
            bump = np.sin(np.pi * (grid.nodes[1:-1] - grid.start) / grid.span)
            nodes[1:-1] += noise * bump[:, None] * rng.standard_normal((l - 1, x.size))
        return nodes

    def attempt(path: Path | None, noise: float) -> tuple[BvpResult, Path]:
        nodes, resid, iters, ok = _bvp_newton(
            model, initial_nodes(path, noise), dt, tol, max_iter, scale
        )
        solved = Path(grid, nodes)
        cost = midpoint_action(model, solved)
        message = "" if ok else "Newton did not reach the residual tolerance"
        if ok and check_minimum:
            h2 = grid.max_spacing**2
            slack = 1e-10 * max(1.0, abs(cost))
            # random amplitudes on low-frequency modes: minimality fails in
            # the lowest modes first (conjugate points), which white noise on
            # the nodes would almost never probe
            phase = np.pi * (grid.nodes[1:-1] - grid.start) / grid.span
            for k in range(n_perturbations):
                mode = np.sin((k % max(1, min(l - 1, n_perturbations)) + 1) * phase)
                direction = rng.standard_normal(x.size)
                direction /= max(1e-300, float(np.linalg.norm(direction)))
                amp = h2 * rng.uniform(0.5, 1.5)
                pert = nodes.copy()
                pert[1:-1] += amp * mode[:, None] * direction[None, :]
                if midpoint_action(model, Path(grid, pert)) < cost - slack:
                    ok = False
                    message = (
                        "saddle-point check failed: a nodal perturbation of "
                        "size h^2 decreased the action"
                    )
                    break
        return BvpResult(solved, cost, resid, ok, iters, 1, message), solved

    best, best_path = attempt(init, 0.0)
    if n_restarts <= 0:
        return best

    results = [best]
    paths = [best_path]
    noise = 0.5 * (float(np.max(np.abs(y - x))) + 1.0)
    for _ in range(n_restarts):
        res, p = attempt(init, noise)
        results.append(res)
        paths.append(p)
    converged = [i for i, r in enumerate(results) if r.converged]
    if not converged:
        return results[0]
    clusters = _cluster_paths([paths[i] for i in converged], cluster_threshold)
    cluster_costs = [
        min(results[converged[i]].cost for i in members) for members in clusters
    ]
    winner_cluster = clusters[int(np.argmin(cluster_costs))]
    winner = min(
        (results[converged[i]] for i in winner_cluster), key=lambda r: r.cost
    )
    return BvpResult(
        winner.path,
        winner.cost,
        winner.residual,
        winner.converged,
        winner.newton_iterations,
        multiplicity=len(clusters),
        message=winner.message,
    )
