import math

import numpy as np
import pytest

from otmesh import (
    EmpiricalPathMeasure,
    HorizonError,
    MarginalSpec,
    Path,
    PointCloud,
    TimeGrid,
    bl_distance_bound,
    build_recovery_measure,
    free_particle,
    harmonic_oscillator,
    many_particle_action,
    marginal_at_time,
    midpoint_action,
    run_convergence_study,
    run_stationarity_study,
    sample_marginal,
    solve_discrete_otm,
)

FREE = free_particle()

UNIT_A = MarginalSpec("uniform_box", low=0.0, high=1.0, sampler="quantile")
UNIT_B = MarginalSpec("uniform_box", low=2.0, high=3.0, sampler="quantile")


# -- marginal sampling -----------------------------------------------------------


def test_quantile_sampling_values():
    assert sample_marginal(UNIT_A, 4).points[:, 0] == pytest.approx(
        [0.125, 0.375, 0.625, 0.875]
    )
    assert sample_marginal(UNIT_A, 2).points[:, 0] == pytest.approx([0.25, 0.75])


def test_sampling_is_deterministic_per_seed():
    spec = MarginalSpec("uniform_box", low=[0.0, 0.0], high=[1.0, 2.0], sampler="iid", seed=9)
    first = sample_marginal(spec, 50).points
    second = sample_marginal(spec, 50).points
    assert np.array_equal(first, second)
    other = MarginalSpec(
        "uniform_box", low=[0.0, 0.0], high=[1.0, 2.0], sampler="iid", seed=10
    )
    assert not np.array_equal(first, sample_marginal(other, 50).points)


def test_grid_sampler_partitions_box():
    spec = MarginalSpec("uniform_box", low=[0.0, 0.0], high=[1.0, 1.0], sampler="grid")
    cloud = sample_marginal(spec, 8)
    assert cloud.size == 8 and cloud.dim == 2
    assert np.all(cloud.points > 0.0) and np.all(cloud.points < 1.0)
    # 1-D grid sampling coincides with quantiles
    spec1 = MarginalSpec("uniform_box", low=0.0, high=1.0, sampler="grid")
    assert sample_marginal(spec1, 4).points[:, 0] == pytest.approx(
        [0.125, 0.375, 0.625, 0.875]
    )


def test_gaussian_sampling_stays_in_support():
    spec = MarginalSpec("gaussian", mean=[1.0], cov=4.0, radius=3.0, sampler="iid", seed=3)
    cloud = sample_marginal(spec, 200)
    assert np.all(np.abs(cloud.points - 1.0) <= 3.0)
    quant = MarginalSpec("gaussian", mean=[1.0], cov=4.0, radius=3.0, sampler="quantile")
    pts = sample_marginal(quant, 9).points[:, 0]
    assert np.all(np.diff(pts) > 0)
    assert pts[4] == pytest.approx(1.0)  # median of the symmetric truncation


def test_custom_points_and_validation_errors():
    spec = MarginalSpec("custom_points", points=[[0.0, 1.0], [2.0, 3.0]])
    assert sample_marginal(spec, 2).size == 2
    with pytest.raises(ValueError):
        sample_marginal(spec, 3)
    with pytest.raises(ValueError):
        MarginalSpec("uniform_box", low=[0.0, 0.0], high=[1.0, 1.0], sampler="quantile")
    with pytest.raises(ValueError):
        MarginalSpec("gaussian", mean=[0.0], cov=1.0, sampler="iid")  # no radius
    with pytest.raises(ValueError):
        MarginalSpec("uniform_box", low=1.0, high=0.0)


# -- one transport solve ------------------------------------------------------------


def test_otm_single_pair():
    result = solve_discrete_otm(
        FREE, PointCloud([0.0]), PointCloud([2.0]), TimeGrid.uniform(0, 1, 8)
    )
    assert result.min_action == pytest.approx(2.0, abs=1e-12)
    assert result.measure.size == 1
    assert np.max(np.abs(result.measure.paths[0].velocities - 2.0)) <= 1e-9


@pytest.mark.parametrize("N", [1, 4, 16])
def test_otm_uniform_shift_costs_two(N):
    grid = TimeGrid.uniform(0, 1, 8)
    result = solve_discrete_otm(
        FREE, sample_marginal(UNIT_A, N), sample_marginal(UNIT_B, N), grid
    )
    assert result.min_action == pytest.approx(2.0, abs=1e-10)


def test_otm_swap_symmetry_free_particle():
    grid = TimeGrid.uniform(0, 1, 6)
    rng = np.random.default_rng(12)
    src = PointCloud(rng.uniform(-1, 1, (5, 1)))
    tgt = PointCloud(rng.uniform(1, 2, (5, 1)))
    forward = solve_discrete_otm(FREE, src, tgt, grid)
    backward = solve_discrete_otm(FREE, tgt, src, grid)
    assert forward.min_action == pytest.approx(backward.min_action, rel=1e-12)


def test_otm_marginals_exact_bitwise():
    grid = TimeGrid.uniform(0, 1, 5)
    rng = np.random.default_rng(8)
    src = PointCloud(rng.uniform(-1, 1, (6, 2)))
    tgt = PointCloud(rng.uniform(2, 3, (6, 2)))
    result = solve_discrete_otm(FREE, src, tgt, grid)
    start = marginal_at_time(result.measure, 0.0).points
    end = marginal_at_time(result.measure, 1.0).points
    assert np.array_equal(start, src.points)
    assert np.array_equal(end, tgt.points[result.plan.perm])


def test_otm_min_action_invariant_under_relabeling():
    grid = TimeGrid.uniform(0, 0.2, 5)
    model = harmonic_oscillator()
    rng = np.random.default_rng(14)
    src = rng.uniform(-1, 1, (6, 1))
    tgt = rng.uniform(-1, 1, (6, 1))
    base = solve_discrete_otm(model, PointCloud(src), PointCloud(tgt), grid)
    shuffled = solve_discrete_otm(
        model,
        PointCloud(src[rng.permutation(6)]),
        PointCloud(tgt[rng.permutation(6)]),
        grid,
    )
    assert shuffled.min_action == pytest.approx(base.min_action, abs=1e-12)


def test_otm_horizon_guard():
    model = harmonic_oscillator(stiffness=2.0)  # growth constant exactly 1
    clouds = PointCloud([0.0, 0.5])
    with pytest.raises(HorizonError):
        solve_discrete_otm(model, clouds, clouds, TimeGrid.uniform(0, 0.2, 8))
    # within the bound, and beyond it with the explicit override
    solve_discrete_otm(model, clouds, clouds, TimeGrid.uniform(0, 0.17, 8))
    solve_discrete_otm(
        model, clouds, clouds, TimeGrid.uniform(0, 0.2, 8), allow_long_horizon=True
    )


def test_otm_refinement_stays_within_quadrature_bound():
    # successive minima differ at most by the summed midpoint quadrature gaps
    model = harmonic_oscillator()
    grid_coarse = TimeGrid.from_step(0, 0.2, 0.02)
    grid_fine = TimeGrid.from_step(0, 0.2, 0.01)
    src = sample_marginal(MarginalSpec("uniform_box", low=0.0, high=1.0), 8)
    tgt = sample_marginal(MarginalSpec("uniform_box", low=0.5, high=1.5), 8)
    coarse = solve_discrete_otm(model, src, tgt, grid_coarse, cost_kind="bvp")
    fine = solve_discrete_otm(model, src, tgt, grid_fine, cost_kind="bvp")

    def quadrature_gap(result, h):
        gaps = []
        for p in result.measure.paths:
            radius = float(np.max(np.abs(p.nodes)))
            gaps.append(h**2 * model.hess_bound(radius) * p.velocity_sq_integral())
        return float(np.mean(gaps))

    bound = quadrature_gap(coarse, grid_coarse.max_spacing) + quadrature_gap(
        fine, grid_fine.max_spacing
    )
    assert abs(coarse.min_action - fine.min_action) <= bound


# -- recovery construction --------------------------------------------------------------


def template_measure():
    grid = TimeGrid.uniform(0.0, 1.0, 4)
    return EmpiricalPathMeasure(
        (
            Path.line(grid, 0.0, 1.0),
            Path.line(grid, 2.0, 1.5),
            Path(grid, np.array([[4.0], [4.5], [4.2], [4.8], [5.0]])),
        )
    )


def test_recovery_spliced_line_action_closed_form():
    grid = TimeGrid.uniform(0.0, 1.0, 1)
    templates = EmpiricalPathMeasure((Path.line(grid, 0.0, 1.0),))
    out = build_recovery_measure(
        templates, PointCloud([0.1]), PointCloud([0.9]), eps=0.1
    )
    spliced = out.paths[0]
    # three affine pieces: 0.1 -> 0 over eps, 0 -> 1 over 1-2eps, 1 -> 0.9 over eps
    expected = 0.05 + 0.625 + 0.05
    assert midpoint_action(FREE, spliced) == pytest.approx(expected, rel=1e-12)
    assert spliced.evaluate(0.0) == pytest.approx([0.1])
    assert spliced.evaluate(1.0) == pytest.approx([0.9])


def test_recovery_with_matching_marginals_adds_only_the_squeeze():
    templates = template_measure()
    sources = PointCloud(np.stack([p.start_point for p in templates.paths]))
    targets = PointCloud(np.stack([p.end_point for p in templates.paths]))
    base = many_particle_action(FREE, list(templates.paths), scheme="continuous")
    increases = []
    for eps in (0.1, 0.01, 0.001):
        out = build_recovery_measure(templates, sources, targets, eps)
        action = many_particle_action(FREE, list(out.paths), scheme="continuous")
        # zero-length splices: the only change is the time squeeze of the core
        assert action == pytest.approx(base / (1.0 - 2.0 * eps), rel=1e-12)
        increases.append(action - base)
    assert increases[0] > increases[1] > increases[2]


def test_recovery_output_close_to_templates_in_bl():
    templates = template_measure()
    sources = PointCloud(np.stack([p.start_point for p in templates.paths]))
    targets = PointCloud(np.stack([p.end_point for p in templates.paths]))
    rate = None
    for eps in (0.1, 0.05, 0.025):
        out = build_recovery_measure(templates, sources, targets, eps)
        dist = bl_distance_bound(out, templates)
        if rate is None:
            rate = dist / eps
        assert dist <= 1.5 * rate * eps + 1e-12


def test_recovery_marginals_exact_for_random_instances():
    rng = np.random.default_rng(0)
    grid = TimeGrid.uniform(0.0, 1.0, 3)
    for trial in range(50):
        n_templates = int(rng.integers(1, 4))
        templates = EmpiricalPathMeasure(
            tuple(Path(grid, rng.uniform(-2, 2, (4, 2))) for _ in range(n_templates))
        )
        N = int(rng.integers(1, 6))
        src = PointCloud(rng.uniform(-2, 2, (N, 2)))
        tgt = PointCloud(rng.uniform(-2, 2, (N, 2)))
        out = build_recovery_measure(templates, src, tgt, eps=0.2)
        start = marginal_at_time(out, 0.0).points
        end = marginal_at_time(out, 1.0).points
        assert np.array_equal(start, src.points)
        assert np.array_equal(np.sort(end, axis=0), np.sort(tgt.points, axis=0))


def test_recovery_eps_validation():
    templates = template_measure()
    clouds = PointCloud([[0.0], [1.0], [2.0]])
    with pytest.raises(ValueError):
        build_recovery_measure(templates, clouds, clouds, eps=0.5)
    with pytest.raises(ValueError):
        build_recovery_measure(templates, clouds, clouds, eps=0.0)


def test_recovery_eps_defaults_to_two_cells():
    grid = TimeGrid.uniform(0.0, 1.0, 10)
    templates = EmpiricalPathMeasure((Path.line(grid, 0.0, 1.0),))
    out = build_recovery_measure(templates, PointCloud([0.1]), PointCloud([0.9]))
    # splices occupy [0, 0.2] and [0.8, 1.0]: two cells of the template grid
    assert out.paths[0].grid.nodes[1] == pytest.approx(0.2)
    assert out.paths[0].grid.nodes[-2] == pytest.approx(0.8)


# -- convergence study --------------------------------------------------------------------


def test_convergence_study_free_particle_exact_rows():
    report = run_convergence_study(
        FREE,
        UNIT_A,
        UNIT_B,
        Ns=(4, 8, 16),
        hs=(0.25, 0.125, 0.0625),
        span=(0.0, 1.0),
        reference_action=2.0,
    )
    assert report.all_ok
    assert [r.N for r in report.rows] == [4, 8, 16]
    for row in report.rows:
        assert row.min_action == pytest.approx(2.0, abs=1e-10)
        assert row.max_el_residual <= 1e-10
    # replication makes the distance to the finest level available
    assert all(np.isfinite(r.d_bl_to_finest) for r in report.rows)
    assert report.rows[-1].d_bl_to_finest == 0.0


def test_convergence_study_horizon_failures_are_recorded():
    model = harmonic_oscillator(stiffness=2.0)
    report = run_convergence_study(
        model,
        UNIT_A,
        MarginalSpec("uniform_box", low=0.5, high=1.5, sampler="quantile"),
        Ns=(2, 4),
        hs=(0.05, 0.05),
        span=(0.0, 0.2),  # beyond sqrt(1/32)
    )
    assert not report.all_ok
    assert all(r.status == "error" for r in report.rows)
    assert all("horizon" in r.error for r in report.rows)


def test_convergence_study_mismatched_schedules_rejected():
    with pytest.raises(ValueError):
        run_convergence_study(FREE, UNIT_A, UNIT_B, Ns=(2,), hs=(0.1, 0.2), span=(0, 1))


def test_convergence_study_nondivisible_sizes_leave_nan():
    report = run_convergence_study(
        FREE, UNIT_A, UNIT_B, Ns=(3, 4), hs=(0.25, 0.25), span=(0.0, 1.0)
    )
    assert math.isnan(report.rows[0].d_bl_to_finest)
    assert report.rows[1].d_bl_to_finest == 0.0


def test_convergence_study_fits_action_order_for_harmonic():
    model = harmonic_oscillator()
    spec_a = MarginalSpec("uniform_box", low=0.0, high=1.0, sampler="quantile")
    spec_b = MarginalSpec("uniform_box", low=0.5, high=1.5, sampler="quantile")
    report = run_convergence_study(
        model,
        spec_a,
        spec_b,
        Ns=(6, 6, 6),
        hs=(0.04, 0.02, 0.01),
        span=(0.0, 0.2),
        cost_kind="bvp",
        reference_action=None,
    )
    assert report.all_ok
    assert report.trajectory_order is not None
    assert report.trajectory_order >= 0.8  # at least linear in h


# -- stationarity study ------------------------------------------------------------------


def test_stationarity_study_free_lines():
    grid = TimeGrid.uniform(0.0, 1.0, 2)
    pi0 = EmpiricalPathMeasure(
        (Path.line(grid, 0.0, 1.0), Path.line(grid, 1.0, -0.5))
    )
    report = run_stationarity_study(FREE, pi0, hs=(0.2, 0.1, 0.05))
    assert report.all_scaling_ok
    for level in report.levels:
        assert level.max_reconstruction_dist == pytest.approx(0.0, abs=1e-12)
        assert level.max_el_residual <= 1e-12


def test_stationarity_study_harmonic_rates():
    model = harmonic_oscillator()
    grid = TimeGrid.uniform(0.0, np.pi / 2, 2)
    pi0 = EmpiricalPathMeasure(
        (Path.line(grid, 1.0, 0.0), Path.line(grid, 0.5, -0.2))
    )
    report = run_stationarity_study(model, pi0, hs=(0.04, 0.02, 0.01))
    assert report.all_scaling_ok
    dists = [lv.max_reconstruction_dist for lv in report.levels]
    for coarse, fine in zip(dists, dists[1:]):
        assert coarse / fine >= 1.8
    # warm-started Newton needs very few iterations after the first level
    assert all(lv.max_newton_iterations <= 5 for lv in report.levels[1:])
