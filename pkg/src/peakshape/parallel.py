"""Order-preserving map over independent jobs."""

from joblib import Parallel, delayed
from joblib.parallel import cpu_count


def parallel_map(function, inputs, n_jobs=1, threading=False):
    """Apply function to every input, in input order.

    n_jobs == 1 runs inline; otherwise joblib dispatches to at most cpu_count()
    workers. Results never depend on n_jobs.
    """
    inputs = list(inputs)
    if n_jobs == 1 or len(inputs) <= 1:
        return [function(inp) for inp in inputs]
    n_jobs = cpu_count() if n_jobs in (None, -1) else min(cpu_count(), n_jobs)
    if threading:
        return Parallel(n_jobs=n_jobs, backend="threading")(delayed(function)(inp) for inp in inputs)
    return Parallel(n_jobs=n_jobs)(delayed(function)(inp) for inp in inputs)
