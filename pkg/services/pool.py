"""Thread-backed worker pool shared by leave-one-out refits, folds, reps and sweeps."""
from typing import Callable, Iterable, List, Optional

from joblib import Parallel, delayed

from config import get_config


def resolve_jobs(n_jobs: Optional[int]) -> int:
    return get_config().N_JOBS if n_jobs is None else n_jobs


def run_parallel(func: Callable, items: Iterable, n_jobs: Optional[int] = None) -> List:
    """Map func over items, preserving order.

    numpy/scipy release the GIL in the dense kernels, so threads are enough
    and the read-only arrays are shared without copies.
    """
    items = list(items)
    jobs = resolve_jobs(n_jobs)
    if jobs == 1 or len(items) <= 1:
        return [func(item) for item in items]
    return Parallel(n_jobs=jobs, prefer='threads')(delayed(func)(item) for item in items)
