from xsigma.grid import Grid
from xsigma.integrator import DuhamelIntegrator, IntegratorControls, initial_state
from xsigma.params import ModelParams


def test_step_timing(benchmark):
    grid = Grid(2, 128, 32.0)
    params = ModelParams(sigma=1.5, dim=2, p=2.0, q=2.0)
    integrator = DuhamelIntegrator(grid, params, IntegratorControls())
    state = initial_state(grid, params, 0.1)
    integrator.propagators(0.01)

    new_state, report = benchmark(integrator.step, state, 0.01)
    assert new_state.is_finite()
