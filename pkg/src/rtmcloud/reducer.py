"""Event-driven recursive image summation.

Invocations pull up to ``fan_in`` image references from the queue, sum the
referenced grids, store the partial sum, and enqueue its reference; the
recursion ends when a message's leaf_count reaches the expected shot count.
Each message carries the number of original per-shot leaves merged into its
blob, so no global coordinator is needed for termination.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .blobstore import KIND_IMAGE, BlobStore, encode_image
from .msgqueue import FileQueue, QueueMessage, StaleReceiptError


class LeafOvercountError(RuntimeError):
    """A message claims more leaves than the run expects.

    This is how double-summation caused by queue redelivery after a crash
    between enqueue and delete surfaces: loudly, instead of as a silently
    wrong image.
    """


class IncompleteReductionError(TimeoutError):
    """Deadline passed before all leaves were merged."""

    def __init__(self, msg: str, leaf_tally: int):
        super().__init__(msg)
        self.leaf_tally = leaf_tally


@dataclass(frozen=True)
class ReductionConfig:
    total_leaves: int
    fan_in: int = 10
    poll_interval: float = 0.05
    max_parallel_invocations: int = 1
    visibility_seconds: float = 120.0
    # How long a worker sits on a partial batch / lone message before acting
    # anyway; keeps batches full while the map phase is still producing.
    batch_grace: float = 0.25
    singleton_grace: float = 0.5
    deadline_seconds: float = 600.0

    def __post_init__(self):
        if not 2 <= self.fan_in <= 32:
            raise ValueError("fan_in must be in [2, 32]")
        if self.total_leaves < 1:
            raise ValueError("total_leaves must be >= 1")
        if self.max_parallel_invocations < 1:
            raise ValueError("max_parallel_invocations must be >= 1")


@dataclass
class ReductionReport:
    invocation_count: int
    final_blob_id: str
    wall_time: float
    invocations: list = field(default_factory=list)  # per-invocation log dicts

    def to_dict(self) -> dict:
        return {
            "invocation_count": self.invocation_count,
            "final_blob_id": self.final_blob_id,
            "wall_time": self.wall_time,
            "invocations": self.invocations,
        }


def reduce_step(messages: list[QueueMessage], store: BlobStore) -> QueueMessage:
    """Sum the images referenced by ``messages`` into one stored blob.

    A singleton batch passes through unchanged (nothing stored), which
    prevents livelock at the root of the reduction tree.
    """
    if not messages:
        raise ValueError("reduce_step needs at least one message")
    if len(messages) == 1:
        return messages[0]
    blobs = [store.get_image(m.blob_id) for m in messages]
    meta = blobs[0].grid_meta()
    for b in blobs[1:]:
        if b.grid_meta() != meta:
            raise ValueError(f"grid mismatch across inputs: {b.grid_meta()} vs {meta}")
    total = np.zeros_like(blobs[0].values)
    for b in blobs:
        total += b.values
    leaf_count = sum(m.leaf_count for m in messages)
    out = blobs[0].with_values(total, leaf_count=leaf_count)
    if out.kind != KIND_IMAGE:
        raise ValueError(f"cannot reduce blobs of kind {out.kind!r}")
    blob_id = store.put(encode_image(out))
    return QueueMessage(blob_id=blob_id, leaf_count=leaf_count)


class _ServiceState:
    def __init__(self, stop_event: threading.Event | None = None):
        self.stop = stop_event if stop_event is not None else threading.Event()
        self.lock = threading.Lock()
        self.final: QueueMessage | None = None
        self.invocations: list[dict] = []
        self.error: BaseException | None = None
        self.max_leaf_seen = 0


def _worker_loop(cfg: ReductionConfig, queue: FileQueue, store: BlobStore, state: _ServiceState, deadline: float):
    pending: list[tuple[QueueMessage, object]] = []
    last_growth = time.monotonic()
    # Unsynchronized jitter keeps parallel invocations from rotating lone
    # partial sums in lockstep (each re-claiming its own release forever).
    jitter = random.Random()

    def release_pending():
        for msg, receipt in pending:
            queue.enqueue(msg)
            try:
                queue.delete(receipt)
            except StaleReceiptError:
                pass
        pending.clear()

    try:
        while not state.stop.is_set():
            if time.monotonic() > deadline:
                return
            want = cfg.fan_in - len(pending)
            got = queue.dequeue(want, cfg.visibility_seconds) if want > 0 else []
            if got:
                pending.extend(got)
                last_growth = time.monotonic()

            for msg, receipt in got:
                state.max_leaf_seen = max(state.max_leaf_seen, msg.leaf_count)
                if msg.leaf_count > cfg.total_leaves:
                    raise LeafOvercountError(
                        f"message claims {msg.leaf_count} leaves but only "
                        f"{cfg.total_leaves} exist; a redelivered partial sum "
                        "was merged twice"
                    )
                if msg.leaf_count == cfg.total_leaves:
                    with state.lock:
                        if state.final is None:
                            state.final = msg
                    queue.delete(receipt)
                    pending.remove((msg, receipt))
                    state.stop.set()
                    release_pending()
                    return

            leaves_held = sum(m.leaf_count for m, _ in pending)
            waited = time.monotonic() - last_growth
            if len(pending) >= 2 and (
                len(pending) == cfg.fan_in
                or leaves_held == cfg.total_leaves
                or waited > cfg.batch_grace
            ):
                msgs = [m for m, _ in pending]
                out = reduce_step(msgs, store)
                with state.lock:
                    state.invocations.append(
                        {
                            "time": time.time(),
                            "inputs": [m.leaf_count for m in msgs],
                            "output": out.leaf_count,
                        }
                    )
                queue.enqueue(out)
                for _, receipt in pending:
                    queue.delete(receipt)
                pending.clear()
                last_growth = time.monotonic()
                continue

            if len(pending) == 1 and waited > cfg.singleton_grace * jitter.uniform(0.5, 1.5):
                # Another invocation may hold the complementary partial; put
                # this one back in circulation instead of sitting on it, then
                # back off so a peer gets first pick.
                release_pending()
                last_growth = time.monotonic()
                time.sleep(cfg.poll_interval * jitter.uniform(1.0, 4.0))
            time.sleep(cfg.poll_interval * jitter.uniform(0.5, 1.5))
    except BaseException as exc:
        with state.lock:
            if state.error is None:
                state.error = exc
        state.stop.set()
        release_pending()


def run_reduction_service(
    config: ReductionConfig,
    queue: FileQueue,
    store: BlobStore,
    stop_event: threading.Event | None = None,
) -> ReductionReport:
    """Run reducer invocations until a single all-leaves image remains.

    ``stop_event`` lets a caller abort the service early (e.g. when the map
    phase producing the leaves has failed).
    """
    start = time.time()
    deadline = time.monotonic() + config.deadline_seconds
    state = _ServiceState(stop_event)
    threads = [
        threading.Thread(
            target=_worker_loop,
            args=(config, queue, store, state, deadline),
            name=f"reducer-{i}",
            daemon=True,
        )
        for i in range(config.max_parallel_invocations)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if state.error is not None:
        raise state.error
    if state.final is None:
        raise IncompleteReductionError(
            f"no complete image after {config.deadline_seconds:g}s; "
            f"largest partial holds {state.max_leaf_seen} of {config.total_leaves} leaves",
            state.max_leaf_seen,
        )
    invocations = sorted(state.invocations, key=lambda e: e["time"])
    return ReductionReport(
        invocation_count=len(invocations),
        final_blob_id=state.final.blob_id,
        wall_time=time.time() - start,
        invocations=invocations,
    )
