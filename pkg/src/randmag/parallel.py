"""Deterministic sharded execution of per-sample tasks.

A task is a top-level function ``task(index, *args) -> dict`` that depends
only on its arguments.  Indices are dealt round-robin to workers and the
results are merged by index, so the output never depends on the number of
workers or on completion order.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

log = logging.getLogger(__name__)


class EnsembleAborted(RuntimeError):
    """Raised when a shard keeps failing; ``manifest`` points at the partial results."""

    def __init__(self, message: str, manifest: Path | None, completed: list[int]):
        super().__init__(message)
        self.manifest = manifest
        self.completed = completed


def shard(indices: Sequence[int], workers: int) -> list[list[int]]:
    """Round-robin split into ``workers`` disjoint index lists."""
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return [list(indices[w::workers]) for w in range(workers)]


def _run_shard(task: Callable, indices: list[int], args: tuple) -> dict[int, dict]:
    return {i: task(i, *args) for i in indices}


def _write_manifest(path: Path, done: dict[int, dict], pending: list[int]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    payload = {
        "completed": sorted(done),
        "pending": sorted(pending),
        "results": {str(i): done[i] for i in sorted(done)},
    }
    tmp.write_text(json.dumps(payload, sort_keys=True))
    os.replace(tmp, path)


def load_partial(path: str | os.PathLike) -> dict[int, dict]:
    """Completed results recorded in a partial-results manifest."""
    data = json.loads(Path(path).read_text())
    return {int(k): v for k, v in data["results"].items()}


def run_parallel(
    task: Callable,
    indices: Iterable[int],
    workers: int = 1,
    args: tuple = (),
    retries: int = 2,
    manifest: str | os.PathLike | None = None,
    resume: bool = False,
) -> list[dict]:
    """Apply ``task`` to every index and return the results in index order.

    Failed shards are retried up to ``retries`` times.  If a shard still
    fails, the completed results are written to ``manifest`` (when given)
    and :class:`EnsembleAborted` is raised.  With ``resume=True`` an
    existing manifest is read first and its completed indices are skipped.
    """
    indices = sorted(set(int(i) for i in indices))
    manifest = Path(manifest) if manifest is not None else None
    done: dict[int, dict] = {}
    if resume and manifest is not None and manifest.exists():
        done = {i: r for i, r in load_partial(manifest).items() if i in set(indices)}
    todo = [i for i in indices if i not in done]
    shards = [s for s in shard(todo, workers) if s]

    attempt = 0
    while shards:
        failed: list[list[int]] = []
        if workers == 1:
            for s in shards:
                try:
                    done.update(_run_shard(task, s, args))
                except Exception as exc:  # noqa: BLE001 - any worker error triggers a retry
                    log.warning("shard %s failed: %s", s[:3], exc)
                    failed.append(s)
        else:
            with ProcessPoolExecutor(max_workers=min(workers, len(shards))) as pool:
                futures = [(s, pool.submit(_run_shard, task, s, args)) for s in shards]
                for s, fut in futures:
                    try:
                        done.update(fut.result())
                    except Exception as exc:  # noqa: BLE001
                        log.warning("shard %s failed: %s", s[:3], exc)
                        failed.append(s)
        if not failed:
            break
        attempt += 1
        if attempt > retries:
            pending = [i for s in failed for i in s]
            if manifest is not None:
                _write_manifest(manifest, done, pending)
            raise EnsembleAborted(
                f"{len(pending)} samples failed after {retries} retries", manifest, sorted(done)
            )
        # retry sample by sample so one bad index does not sink its neighbours
        shards = [[i] for s in failed for i in s]
    if manifest is not None and manifest.exists():
        manifest.unlink()
    return [done[i] for i in indices]
