"""Replicate execution: worker pool over seeded streams with horizon-extension retries."""

import logging
import time
from typing import Any, Callable, List, Optional, Sequence

from joblib import Parallel, delayed

from .config import DEFAULT_HORIZON, HORIZON_GROWTH, MAX_RETRIES
from .models import HorizonExhausted
from .rng import RngStream
from .utils import log_detail, log_section

logger = logging.getLogger(__name__)

ReplicateFn = Callable[[RngStream, float], Any]


def execute_with_retry(fn: ReplicateFn, stream: RngStream, horizon: float = DEFAULT_HORIZON) -> Any:
    """Run fn(stream, horizon), growing the horizon geometrically on HorizonExhausted.

    Each attempt draws from a fresh child of the replicate stream, so a
    retried replicate is still a pure function of the master seed.
    """
    attempts = stream.spawn(MAX_RETRIES)
    for attempt in range(MAX_RETRIES):
        current = horizon * HORIZON_GROWTH ** attempt
        if attempt > 0:
            log_detail("🔄", f"RETRY ATTEMPT {attempt + 1}", f"Extending horizon to {current:g}")
        try:
            return fn(attempts[attempt], current)
        except HorizonExhausted as e:
            logger.debug(f"Attempt {attempt + 1} on {stream!r} exhausted its horizon: {e}")
    raise HorizonExhausted(
        f"horizon exhausted after {MAX_RETRIES} attempts (last horizon "
        f"{horizon * HORIZON_GROWTH ** (MAX_RETRIES - 1):g})"
    )


def replicate_streams(master_seed: int, n: int, offset: int = 0) -> List[RngStream]:
    """Streams keyed by (master_seed, offset + i)."""
    return [RngStream(master_seed, offset + i) for i in range(n)]


def run_replicates(fn: ReplicateFn, streams: Sequence[RngStream], threads: int = 1,
                   horizon: float = DEFAULT_HORIZON, label: Optional[str] = None) -> List[Any]:
    """Apply fn to every stream in a shared-nothing worker pool; results keep stream order."""
    start = time.perf_counter()
    if label:
        log_section(f"🚀 {label}: {len(streams)} replicates on {threads} worker(s)")
    if threads <= 1 or len(streams) <= 1:
        results = [execute_with_retry(fn, s, horizon) for s in streams]
    else:
        results = Parallel(n_jobs=threads)(delayed(execute_with_retry)(fn, s, horizon) for s in streams)
    if label:
        log_detail("⏱️", f"{label} finished", f"{time.perf_counter() - start:.2f}s")
    return list(results)
