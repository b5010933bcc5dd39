from __future__ import annotations

import traceback
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import dask
import numpy as np

from xsigma.core import norms
from xsigma.grid import Grid
from xsigma.integrator import DuhamelIntegrator, IntegratorControls, initial_state
from xsigma.params import ModelParams
from xsigma.testfunctions import TestFunctionSet, evaluate_functionals

TaskResult = Tuple[Any, Any, Optional[str]]


def run_tasks(
    func: Callable[..., TaskResult],
    items: Sequence[Any],
    workers: int = 1,
    client: Any = None,
    scheduler: str = "processes",
) -> List[Any]:
    """
    Run independent jobs and merge their results by sort key.

    Parameters
    ----------
    func : callable
        Top-level task returning ``(key, result, error)``.
    items : sequence
        One argument per job.
    workers : int, default 1
        Size of the local pool; 1 runs the jobs in order in this process.
    client : dask.distributed.Client, optional
        Submit through an existing client instead of a local pool.
    scheduler : str, default "processes"
        Local dask scheduler used when ``workers > 1``.

    Returns
    -------
    list
        Results sorted by key.
    """
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}.")
    if client is not None:
        outputs = client.gather(client.map(func, items, pure=False))
    elif workers > 1 and len(items) > 1:
        tasks = [dask.delayed(func)(item) for item in items]
        outputs = dask.compute(*tasks, scheduler=scheduler, num_workers=workers)
    else:
        outputs = [func(item) for item in items]

    errors = [err for _, _, err in outputs if err]
    if errors:
        raise RuntimeError("Task error:\n" + "\n".join(errors))
    return [result for _, result in sorted(((k, r) for k, r, _ in outputs), key=lambda kr: kr[0])]


def _lifespan_task(job: Dict[str, Any]) -> TaskResult:
    """
    Worker task integrating one data size until blow-up or the time budget.

    Parameters
    ----------
    job : dict
        ``epsilon``, ``grid``, ``params``, ``controls``, ``t_max``, ``width``,
        ``shape``, ``seed`` and ``n_samples``.

    Returns
    -------
    tuple
        (epsilon, summary dict, error message or None)
    """
    epsilon = job["epsilon"]
    try:
        grid: Grid = job["grid"]
        params: ModelParams = job["params"]
        controls: IntegratorControls = job["controls"]
        state = initial_state(
            grid, params, epsilon, width=job["width"], shape=job["shape"], seed=job["seed"]
        )
        integrator = DuhamelIntegrator(grid, params, controls)
        samples = np.linspace(0.0, job["t_max"], job["n_samples"] + 1)[1:]
        trajectory, report = integrator.integrate(state, job["t_max"], samples)
        last = trajectory.isel(time=-1)
        state = integrator.last_state
        summary = {
            "norms": (norms(state.u, params, state.t), norms(state.v, params, state.t)),
            "t_detect": float(trajectory.attrs["t_detect"]),
            "dt_at_detection": float(report.dt_used),
            "stop_reason": trajectory.attrs["stop_reason"],
            "linf_u": float(last["linf_u"]),
            "linf_v": float(last["linf_v"]),
            "l2_u": float(last["l2_u"]),
            "l2_v": float(last["l2_v"]),
            "time": float(last["time"]),
        }
        return epsilon, summary, None
    except Exception as e:
        return epsilon, None, f"epsilon={epsilon}: {e}\n{traceback.format_exc()}"


def _functional_task(job: Dict[str, Any]) -> TaskResult:
    """
    Worker task evaluating the space-time functionals at one scaling R.

    Parameters
    ----------
    job : dict
        ``trajectory``, ``tfs`` and ``params``.

    Returns
    -------
    tuple
        (R, FunctionalValues, error message or None)
    """
    tfs: TestFunctionSet = job["tfs"]
    try:
        values = evaluate_functionals(job["trajectory"], tfs, job["params"])
        return tfs.R, values, None
    except Exception as e:
        return tfs.R, None, f"R={tfs.R}: {e}\n{traceback.format_exc()}"
