import time

import dask.distributed

from xsigma.criticality import emit_region_map
from xsigma.experiments import ExperimentConfig, run_lifespan_sweep
from xsigma.grid import Grid
from xsigma.params import ModelParams

EPSILONS = (1.0, 0.7, 0.5, 0.35, 0.25, 0.18, 0.12, 0.08)


def benchmark_region_map(num, chunks):
    params = ModelParams(sigma=1.75, dim=2.5, p=2.0, q=2.0)
    start = time.perf_counter()
    emit_region_map(params, num=num, chunks=chunks)
    return time.perf_counter() - start


def benchmark_lifespan(n_workers, client=None):
    config = ExperimentConfig(
        ModelParams(sigma=1.5, dim=2, p=2.0, q=2.0),
        grid=Grid(2, 64, 32.0),
        epsilons=EPSILONS,
        workers=n_workers,
    )
    start = time.perf_counter()
    run_lifespan_sweep(config, client=client)
    return time.perf_counter() - start


print("| Region map | Chunks | Time |")
print("|------------|--------|------|")
for num in (200, 800):
    for chunks in (None, 100):
        t = benchmark_region_map(num, chunks)
        print(f"| {num}x{num} | {chunks or 'eager'} | {t:.2f}s |")

print("\n| Lifespan sweep | Workers | Time | Speedup |")
print("|----------------|---------|------|---------|")
base_time = benchmark_lifespan(1)
print(f"| local | 1 | {base_time:.2f}s | 1.0x |")
for w in (2, 4):
    t = benchmark_lifespan(w)
    print(f"| local | {w} | {t:.2f}s | {base_time / t:.1f}x |")

cluster = dask.distributed.LocalCluster(n_workers=4, threads_per_worker=1, processes=True)
client = dask.distributed.Client(cluster)
try:
    t = benchmark_lifespan(1, client=client)
    print(f"| distributed | 4 | {t:.2f}s | {base_time / t:.1f}x |")
finally:
    client.close()
    cluster.close()
