import time

from xsigma.core import apply_fractional_laplacian, to_physical, to_spectral
from xsigma.grid import Grid
from xsigma.integrator import DuhamelIntegrator, IntegratorControls, initial_state
from xsigma.params import ModelParams
from xsigma.propagators import Equation, grid_propagator

PARAMS = {
    1: ModelParams(sigma=1.5, dim=1, p=2.0, q=2.0),
    2: ModelParams(sigma=1.5, dim=2, p=2.0, q=2.0),
    3: ModelParams(sigma=1.5, dim=3, p=2.0, q=2.0),
}


def benchmark_transforms(grid, n_runs=20):
    values = initial_state(grid, PARAMS[grid.dim], 1.0).u_t
    physical = to_physical(values)

    start = time.perf_counter()
    for _ in range(n_runs):
        to_physical(apply_fractional_laplacian(to_spectral(physical, grid), 1.5))
    return (time.perf_counter() - start) / n_runs


def benchmark_propagator(grid, n_runs=5):
    params = PARAMS[grid.dim]
    start = time.perf_counter()
    for _ in range(n_runs):
        grid_propagator(grid, params, Equation.VISCO, 0.01)
        grid_propagator(grid, params, Equation.FRICTION, 0.01)
    return (time.perf_counter() - start) / n_runs


def benchmark_step(grid, order, n_runs=20):
    params = PARAMS[grid.dim]
    integrator = DuhamelIntegrator(grid, params, IntegratorControls(order=order))
    state = initial_state(grid, params, 0.1)
    # Warmup fills the propagator cache
    integrator.step(state, 0.01)

    start = time.perf_counter()
    for _ in range(n_runs):
        state, _ = integrator.step(state, 0.01)
    return (time.perf_counter() - start) / n_runs


grids = [
    ("1D N=4096", Grid(1, 4096, 128.0)),
    ("2D N=128", Grid(2, 128, 32.0)),
    ("2D N=256", Grid(2, 256, 64.0)),
    ("2D N=512", Grid(2, 512, 64.0)),
    ("3D N=64", Grid(3, 64, 16.0)),
]

print("## Spectral kernels")
print("| Grid | Modes | Transform + multiplier | Propagator build |")
print("|------|-------|------------------------|------------------|")
for name, grid in grids:
    t_fft = benchmark_transforms(grid)
    t_prop = benchmark_propagator(grid)
    print(f"| {name} | {grid.size:,} | {t_fft * 1000:.2f} ms | {t_prop * 1000:.2f} ms |")

print("\n## Integrator step")
print("| Grid | Exponential Euler | Predictor-corrector |")
print("|------|-------------------|---------------------|")
for name, grid in grids:
    t1 = benchmark_step(grid, 1)
    t2 = benchmark_step(grid, 2)
    print(f"| {name} | {t1 * 1000:.2f} ms | {t2 * 1000:.2f} ms |")
