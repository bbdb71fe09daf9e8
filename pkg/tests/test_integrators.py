import numpy as np
import pytest

from otmesh import (
    BlowUpError,
    Path,
    PhasePoint,
    TimeGrid,
    closed_form_cost,
    continuous_action,
    discrete_el_step,
    discrete_flow,
    el_residual,
    free_particle,
    harmonic_oscillator,
    midpoint_action,
    reference_flow,
    solve_bvp,
    uniform_distance,
)

FREE = free_particle()
HARMONIC = harmonic_oscillator()


# -- reference flow ------------------------------------------------------------


def test_reference_flow_free_particle_line():
    result = reference_flow(FREE, PhasePoint(0.0, 1.0), TimeGrid.uniform(0, 1, 10))
    assert result.path.nodes[:, 0] == pytest.approx(result.path.grid.nodes)
    assert result.final_state.position == pytest.approx([1.0])
    assert result.final_state.velocity == pytest.approx([1.0])


def test_reference_flow_harmonic_quarter_period():
    grid = TimeGrid.uniform(0, np.pi / 2, 50)
    result = reference_flow(HARMONIC, PhasePoint(1.0, 0.0), grid)
    assert abs(result.final_state.position[0]) <= 1e-8
    assert result.final_state.velocity[0] == pytest.approx(-1.0, abs=1e-8)


@pytest.mark.parametrize("amplitude", [1.0, 10.0, 100.0])
def test_reference_flow_oscillator_family_returns_to_origin(amplitude):
    # the family amplitude*sin(t) connects the origin to itself over a half
    # period at every amplitude; its action evaluates to zero
    grid = TimeGrid.uniform(0.0, np.pi, 200)
    result = reference_flow(HARMONIC, PhasePoint(0.0, amplitude), grid)
    assert abs(result.final_state.position[0]) <= 1e-6 * amplitude
    sampled = Path.from_function(
        TimeGrid.uniform(0.0, np.pi, 2500), lambda t: amplitude * np.sin(t)
    )
    assert continuous_action(HARMONIC, sampled) == pytest.approx(
        0.0, abs=1e-6 * amplitude**2
    )


def test_reference_flow_guard_radius():
    with pytest.raises(BlowUpError):
        reference_flow(
            FREE, PhasePoint(0.0, 1.0), TimeGrid.uniform(0, 1, 4), guard_radius=0.5
        )
    with pytest.raises(ValueError):
        reference_flow(FREE, PhasePoint(0.0, 1.0), TimeGrid.uniform(0, 1, 4), 8)


# -- single implicit step --------------------------------------------------------


def test_el_step_free_particle_extrapolates():
    nxt = discrete_el_step(FREE, 1.0, 2.0, 0.5, 0.25)
    assert nxt == pytest.approx([2.5])


def test_el_step_hand_solved_value():
    # linear update for the quadratic potential: -10(z - 1) = 0.05 + 0.05(1+z)/2
    nxt = discrete_el_step(HARMONIC, 1.0, 1.0, 0.1, 0.1)
    assert nxt == pytest.approx([9.925 / 10.025], rel=1e-12)


def test_el_step_equilibrium_is_fixed_point():
    nxt = discrete_el_step(HARMONIC, 0.0, 0.0, 0.1, 0.1)
    assert nxt == pytest.approx([0.0], abs=1e-14)


def test_el_step_rejects_bad_steps():
    with pytest.raises(ValueError):
        discrete_el_step(FREE, 0.0, 1.0, -0.1, 0.1)
    with pytest.raises(ValueError):
        discrete_el_step(FREE, [0.0, 1.0], [1.0], 0.1, 0.1)


# -- discrete flow -----------------------------------------------------------------


def test_discrete_flow_free_particle():
    grid = TimeGrid.uniform(0, 1, 10)
    result = discrete_flow(FREE, PhasePoint(0.0, 1.0), grid)
    assert result.path.nodes[:, 0] == pytest.approx(grid.nodes)
    assert result.final_state.velocity == pytest.approx([1.0])


def test_discrete_flow_harmonic_endpoint():
    grid = TimeGrid.from_step(0, np.pi / 2, 0.01)
    result = discrete_flow(HARMONIC, PhasePoint(1.0, 0.0), grid)
    assert abs(result.final_state.position[0]) <= 5e-3


def test_discrete_flow_error_halves_with_h():
    errors = []
    for h in (0.04, 0.02, 0.01):
        grid = TimeGrid.from_step(0, np.pi / 2, h)
        disc = discrete_flow(HARMONIC, PhasePoint(1.0, 0.0), grid)
        ref = reference_flow(HARMONIC, PhasePoint(1.0, 0.0), grid)
        errors.append(uniform_distance(disc.path, ref.path))
    for coarse, fine in zip(errors, errors[1:]):
        assert coarse / fine >= 1.8


def test_discrete_flow_second_order_from_force_free_launch():
    # launched where the force vanishes, the first-order initialization is
    # harmless and the scheme's quadratic rate is visible
    errors = []
    for h in (0.04, 0.02, 0.01):
        grid = TimeGrid.from_step(0, np.pi / 2, h)
        disc = discrete_flow(HARMONIC, PhasePoint(0.0, 1.0), grid)
        ref = reference_flow(HARMONIC, PhasePoint(0.0, 1.0), grid)
        errors.append(uniform_distance(disc.path, ref.path))
    for coarse, fine in zip(errors, errors[1:]):
        assert np.log2(coarse / fine) >= 1.8


def test_discrete_flow_time_reversal_palindrome():
    grid = TimeGrid.uniform(0.0, 5.0, 100)
    forward = discrete_flow(HARMONIC, PhasePoint(0.3, 0.8), grid)
    end = forward.final_state
    backward = discrete_flow(HARMONIC, PhasePoint(end.position, -end.velocity), grid)
    assert np.max(np.abs(backward.path.nodes - forward.path.nodes[::-1])) <= 1e-10


def test_discrete_flow_energy_stays_bounded():
    h = 0.01
    steps = 20000
    grid = TimeGrid.uniform(0.0, h * steps, steps)
    result = discrete_flow(HARMONIC, PhasePoint(1.0, 0.0), grid)
    nodes = result.path.nodes[:, 0]
    velocity = np.diff(nodes) / h
    energy = 0.5 * velocity**2 + 0.5 * nodes[:-1] ** 2
    deviation = np.abs(energy - energy[0])
    fitted = deviation[:100].max()
    assert deviation.max() <= 2.0 * fitted
    assert fitted <= 2.0 * h  # O(h) oscillation for difference-quotient energy


# -- stationarity residual ----------------------------------------------------------


def test_el_residual_of_discrete_flow_is_tiny():
    grid = TimeGrid.uniform(0, 1, 50)
    result = discrete_flow(HARMONIC, PhasePoint(1.0, 0.5), grid)
    assert el_residual(HARMONIC, result.path) <= 1e-10


def test_el_residual_collinear_free():
    grid = TimeGrid.uniform(0, 1, 5)
    assert el_residual(FREE, Path.line(grid, 0.0, 1.0)) == 0.0


def test_el_residual_kink():
    grid = TimeGrid.uniform(0, 1, 2)
    path = Path(grid, np.array([[0.0], [0.0], [1.0]]))
    assert el_residual(FREE, path) == pytest.approx(2.0)


def test_el_residual_needs_interior_nodes():
    with pytest.raises(ValueError):
        el_residual(FREE, Path.line(TimeGrid.uniform(0, 1, 1), 0.0, 1.0))


# -- boundary-value solves -------------------------------------------------------------


def test_bvp_free_particle_straight_line():
    grid = TimeGrid.uniform(0, 1, 16)
    result = solve_bvp(FREE, 0.0, 2.0, grid)
    assert result.converged
    assert result.cost == pytest.approx(2.0, rel=1e-12)
    assert result.residual <= 1e-12
    assert np.max(np.abs(result.path.nodes[:, 0] - grid.nodes * 2.0)) <= 1e-9


def test_bvp_free_particle_from_random_warm_starts():
    grid = TimeGrid.uniform(0, 1, 16)
    rng = np.random.default_rng(17)
    line = Path.line(grid, 0.0, 2.0)
    for _ in range(10):
        warm = Path(grid, line.nodes + rng.uniform(-3, 3, line.nodes.shape))
        warm = Path(grid, np.vstack([[0.0], warm.nodes[1:-1], [2.0]]))
        result = solve_bvp(FREE, 0.0, 2.0, grid, init=warm)
        assert result.converged
        assert result.residual <= 1e-12
        assert np.max(np.abs(result.path.nodes[:, 0] - grid.nodes * 2.0)) <= 1e-9


@pytest.mark.parametrize(
    "x,y,expected",
    [(0.0, 1.0, 0.0), (1.0, 1.0, -1.0)],
    ids=["zero-to-one", "one-to-one"],
)
def test_bvp_harmonic_quarter_period_costs(x, y, expected):
    grid = TimeGrid.uniform(0, np.pi / 2, 1000)
    result = solve_bvp(HARMONIC, x, y, grid)
    assert result.converged
    assert result.cost == pytest.approx(expected, abs=1e-4)


def test_bvp_endpoints_pinned_exactly():
    grid = TimeGrid.uniform(0, 0.7, 33)
    x = np.array([0.123456789, -1.5])
    y = np.array([2.718281828, 0.25])
    result = solve_bvp(HARMONIC, x, y, grid)
    assert np.array_equal(result.path.nodes[0], x)
    assert np.array_equal(result.path.nodes[-1], y)


def test_bvp_cost_converges_quadratically_to_continuum():
    x, y, span = 0.2, 0.9, 1.0
    exact = closed_form_cost(HARMONIC, x, y, span)
    errors = []
    for n in (25, 50, 100):
        cost = solve_bvp(HARMONIC, x, y, TimeGrid.uniform(0, span, n)).cost
        errors.append(abs(cost - exact))
    for coarse, fine in zip(errors, errors[1:]):
        assert 3.0 <= coarse / fine <= 5.0


def test_bvp_saddle_detected_beyond_conjugate_time():
    # past the conjugate span the stationary trajectory is not a minimum
    grid = TimeGrid.uniform(0, 1.5 * np.pi, 60)
    flagged = solve_bvp(HARMONIC, 0.0, 1.0, grid)
    assert not flagged.converged
    assert "saddle" in flagged.message
    stationary = solve_bvp(HARMONIC, 0.0, 1.0, grid, check_minimum=False)
    assert stationary.converged
    assert stationary.residual <= 1e-10


def inverted_ring_ridge():
    # V has a ridge of maxima on the unit circle; minimizers hug the ridge,
    # giving two mirror trajectories between antipodal points
    from otmesh import LagrangianModel

    return LagrangianModel(
        mass=1.0,
        potential=lambda x: -np.square(np.sum(np.square(x), axis=-1) - 1.0),
        grad_potential=lambda x: (
            -4.0 * (np.sum(np.square(x), axis=-1) - 1.0)[..., None]
            * np.asarray(x, dtype=float)
        ),
        hess_bound=lambda r: 12.0 * r**2 + 4.0,
        quadratic_growth=6.4,
    )


def test_bvp_multistart_clusters_mirror_minimizers():
    model = inverted_ring_ridge()
    grid = TimeGrid.uniform(0, 3.0, 40)
    result = solve_bvp(
        model,
        np.array([-1.0, 0.0]),
        np.array([1.0, 0.0]),
        grid,
        n_restarts=5,
        rng=np.random.default_rng(0),
    )
    assert result.converged
    assert result.multiplicity >= 2
    # the winner bends away from the symmetric straight line
    assert np.max(np.abs(result.path.nodes[:, 1])) > 0.5


def test_bvp_single_interval_is_the_segment():
    grid = TimeGrid.uniform(0, 1, 1)
    result = solve_bvp(HARMONIC, 0.5, 1.5, grid)
    assert result.converged and result.residual == 0.0
    assert result.cost == pytest.approx(midpoint_action(HARMONIC, result.path))


def test_bvp_jacobian_matches_finite_differences():
    from otmesh.integrators import _bvp_jacobian, _interior_defects
    from otmesh import double_well

    rng = np.random.default_rng(31)
    for model in (HARMONIC, double_well()):
        grid = TimeGrid(np.sort(np.concatenate(([0.0, 0.7], rng.uniform(0.05, 0.65, 4)))))
        nodes = rng.uniform(-1.5, 1.5, (grid.n_intervals + 1, 2))
        dt = grid.spacings
        jac = _bvp_jacobian(model, nodes, dt).toarray()
        step = 1e-6
        fd = np.zeros_like(jac)
        base = _interior_defects(model, nodes, dt).ravel()
        for col in range(jac.shape[1]):
            bumped = nodes.copy()
            flat = bumped[1:-1].ravel()
            flat[col] += step
            bumped[1:-1] = flat.reshape(bumped[1:-1].shape)
            fd[:, col] = (_interior_defects(model, bumped, dt).ravel() - base) / step
        assert np.max(np.abs(jac - fd)) <= 1e-5 * max(1.0, np.max(np.abs(jac)))
