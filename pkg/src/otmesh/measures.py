"""Empirical measures on path space and phase space, and their diagnostics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DimensionMismatchError
from .integrators import el_residual, reference_flow
from .models import LagrangianModel
from .paths import Path, PhasePoint, TimeGrid, midpoint_action, uniform_distance
from .transport import PointCloud, solve_assignment


@dataclass(frozen=True)
class EmpiricalPathMeasure:
    """Uniform-weight sum of path masses (1/N) sum delta_{gamma_i}."""

    paths: tuple[Path, ...]

    def __post_init__(self):
        paths = tuple(self.paths)
        if not paths:
            raise ValueError("a path measure needs at least one path")
        dims = {p.dim for p in paths}
        if len(dims) != 1:
            raise DimensionMismatchError(f"paths mix dimensions {sorted(dims)}")
        spans = {(p.grid.start, p.grid.end) for p in paths}
        if len(spans) != 1:
            raise ValueError(f"paths cover different time spans: {sorted(spans)}")
        object.__setattr__(self, "paths", paths)

    @property
    def size(self) -> int:
        return len(self.paths)

    @property
    def dim(self) -> int:
        return self.paths[0].dim

    @property
    def time_span(self) -> tuple[float, float]:
        g = self.paths[0].grid
        return g.start, g.end

    def common_grid_nodes(self) -> np.ndarray | None:
        """Shared node vector when every path lives on the same grid."""
        ref = self.paths[0].grid.nodes
        for p in self.paths[1:]:
            if not np.array_equal(p.grid.nodes, ref):
                return None
        return ref

    def replicate(self, factor: int) -> "EmpiricalPathMeasure":
        """Duplicate every atom; represents the same measure as a multiset."""
        if factor < 1:
            raise ValueError("replication factor must be >= 1")
        return EmpiricalPathMeasure(self.paths * factor)


@dataclass(frozen=True)
class PhaseMeasure:
    """Uniform-weight empirical measure on phase space R^n x R^n."""

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        vel = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if pos.shape != vel.shape:
            raise DimensionMismatchError("positions and velocities shapes differ")
        if pos.shape[0] == 0:
            raise ValueError("a phase measure needs at least one state")
        pos, vel = pos.copy(), vel.copy()
        pos.setflags(write=False)
        vel.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)

    @classmethod
    def from_states(cls, states) -> "PhaseMeasure":
        return cls(
            np.stack([s.position for s in states]),
            np.stack([s.velocity for s in states]),
        )

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def states(self) -> Iterator[PhasePoint]:
        for x, v in zip(self.positions, self.velocities):
            yield PhasePoint(x, v)


def push_forward_flow(
    model: LagrangianModel,
    eta: PhaseMeasure,
    grid: TimeGrid,
    kind: str = "discrete",
    threads: int = 1,
    substeps_per_interval: int = 16,
    guard_radius: float = 1e6,
) -> EmpiricalPathMeasure:
    """Launch every phase-space atom along a flow; path i comes from state i.

    ``kind="reference"`` uses the RK4 reference flow, ``kind="discrete"`` the
    midpoint recurrence.  For unbounded potentials the caller is responsible
    for keeping the span within the admissible horizon when the resulting
    measure feeds a minimization; pure flow studies remain valid beyond it.
    """
    from .integrators import discrete_flow  # local import keeps module load light

    if kind == "reference":
        def launch(state: PhasePoint) -> Path:
            return reference_flow(
                model, state, grid, substeps_per_interval, guard_radius
            ).path
    elif kind == "discrete":
        def launch(state: PhasePoint) -> Path:
            return discrete_flow(model, state, grid).path
    else:
        raise ValueError(f"unknown flow kind {kind!r}")

    states = list(eta.states())
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            paths = list(pool.map(launch, states))
    else:
        paths = [launch(s) for s in states]
    return EmpiricalPathMeasure(tuple(paths))


def marginal_at_time(pi: EmpiricalPathMeasure, t: float) -> PointCloud:
    """Push the path measure through evaluation at time t."""
    a, b = pi.time_span
    if not (a <= t <= b):
        raise ValueError(f"time {t} outside the measure's span [{a}, {b}]")
    return PointCloud(np.stack([p.evaluate(t) for p in pi.paths]))


def _pairwise_sup_distances(
    p: EmpiricalPathMeasure, q: EmpiricalPathMeasure
) -> np.ndarray:
    """Matrix of sup-over-time distances between the atoms of two measures."""
    nodes_p = p.common_grid_nodes()
    nodes_q = q.common_grid_nodes()
    if nodes_p is not None and nodes_q is not None and np.array_equal(nodes_p, nodes_q):
        # same grid on both sides: the sup over shared nodes is exact
        A = np.stack([path.nodes for path in p.paths])  # (N, l+1, n)
        B = np.stack([path.nodes for path in q.paths])
        out = np.empty((A.shape[0], B.shape[0]))
        chunk = max(1, int(2e6 // max(1, B.size)))
        for lo in range(0, A.shape[0], chunk):
            diff = A[lo : lo + chunk, None, :, :] - B[None, :, :, :]
            out[lo : lo + chunk] = np.max(np.linalg.norm(diff, axis=3), axis=2)
        return out
    return np.array(
        [[uniform_distance(pi, qj) for qj in q.paths] for pi in p.paths]
    )


def bl_distance_bound(
    p: EmpiricalPathMeasure, q: EmpiricalPathMeasure, cutoff: float = 2.0
) -> float:
    """Assignment upper bound for the bounded-Lipschitz distance.

    Computes the optimal-matching average of min(sup-distance, cutoff).  Any
    test function with sup-norm plus Lipschitz constant at most one changes by
    at most min(d, 2) between paths at sup-distance d, so with cutoff 2 this
    is an upper bound for the bounded-Lipschitz distance.  It is itself a
    transport metric on equal-size multisets and vanishes iff the multisets
    coincide; it is used as a convergence diagnostic, not as the exact value.
    """
    if p.size != q.size:
        raise ValueError(f"measures have different sizes: {p.size} vs {q.size}")
    if p.dim != q.dim:
        raise DimensionMismatchError("measures have different space dimensions")
    ground = np.minimum(_pairwise_sup_distances(p, q), cutoff)
    return solve_assignment(ground).average_cost


@dataclass(frozen=True)
class ConcentrationReport:
    """Per-path stationarity and flow-reconstruction diagnostics.

    ``reconstruction_distances[i]`` is the sup-distance between path i and the
    reference orbit launched from its own initial phase point (position at the
    start, first difference quotient as velocity); small values certify that
    the measure is carried by orbits of the reference flow at the grid's
    resolution.
    """

    el_residuals: np.ndarray
    reconstruction_distances: np.ndarray
    midpoint_actions: np.ndarray

    def summary(self) -> dict:
        def agg(arr: np.ndarray) -> dict:
            return {
                "max": float(np.max(arr)),
                "mean": float(np.mean(arr)),
                "median": float(np.median(arr)),
                "q90": float(np.quantile(arr, 0.9)),
            }

        return {
            "n_paths": int(self.el_residuals.size),
            "el_residual": agg(self.el_residuals),
            "reconstruction_distance": agg(self.reconstruction_distances),
            "midpoint_action": agg(self.midpoint_actions),
        }


def concentration_diagnostics(
    model: LagrangianModel,
    pi: EmpiricalPathMeasure,
    threads: int = 1,
    substeps_per_interval: int = 16,
    guard_radius: float = 1e6,
) -> ConcentrationReport:
    """Quantify how close a path measure is to flow-concentrated stationarity."""

    def diagnose(path: Path) -> tuple[float, float, float]:
        resid = (
            el_residual(model, path) if path.grid.n_intervals >= 2 else 0.0
        )
        v0 = (path.nodes[1] - path.nodes[0]) / path.grid.spacings[0]
        orbit = reference_flow(
            model,
            PhasePoint(path.nodes[0], v0),
            path.grid,
            substeps_per_interval,
            guard_radius,
        ).path
        return resid, uniform_distance(path, orbit), midpoint_action(model, path)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(diagnose, pi.paths))
    else:
        rows = [diagnose(p) for p in pi.paths]
    resids, dists, actions = (np.array(col) for col in zip(*rows))
    return ConcentrationReport(resids, dists, actions)
