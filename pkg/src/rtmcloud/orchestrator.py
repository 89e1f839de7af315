"""End-to-end pipeline driver: survey -> parallel per-shot RTM -> reduction.

The map phase emulates a batch service on one machine: worker OS processes
claim shots FCFS from a shared task directory (atomic rename), write their
images to the blob store and announce them on the queue.  The reduction
service consumes the queue concurrently, so summation starts while shots
are still being migrated.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import multiprocessing as mp
import os
import sys
import threading
import time
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import batchsim
from .blobstore import BlobStore, encode_image
from .config import PipelineConfig, config_from_dict
from .msgqueue import FileQueue, QueueMessage
from .reducer import ReductionConfig, ReductionReport, run_reduction_service
from .survey import (
    VelocityModel2D,
    apply_reciprocity,
    make_layered_model,
    make_random_obn_geometry,
)
from .wavekernel import ImageGrid, forward_model, ricker, rtm_shot_image, stable_dt

_POLL = 0.05


class MapPhaseError(RuntimeError):
    """A shot failed twice; carries the traces of the shots that did finish."""

    def __init__(self, msg: str, traces: list):
        super().__init__(msg)
        self.traces = traces


@dataclass(frozen=True)
class JobTrace:
    shot_id: int
    worker_id: int
    start: float
    end: float
    wall_seconds: float
    blob_id: str
    attempt: int = 1

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("trace end precedes start")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class CostReport:
    n_jobs: int
    mean_runtime_minutes: float
    headline_n_vms: int
    fixed_cost: float
    batch_cost: float
    ratio: float
    low_priority_cost: float
    makespan_hours: float
    runtimes_csv: str
    curve_csv: str

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def build_survey(config: PipelineConfig):
    """Deterministic survey assembly shared by the orchestrator and workers.

    Returns (migration_model, true_model, plans, dt, nt).  The "true" model
    adds a velocity bump at the configured scatterer so synthetic data has a
    knowable focus point; observed data is data(true) - data(background).
    """
    m = config.model
    model = make_layered_model(m.nz, m.nx, m.dz, m.dx, list(m.layer_velocities))
    true_model = add_point_scatterer(
        model,
        config.scatterer.x,
        config.scatterer.z,
        config.scatterer.relative_amplitude,
        config.scatterer.half_cells,
    )
    dt = config.survey.dt_record
    if dt is None:
        dt = 0.8 * min(stable_dt(model), stable_dt(true_model))
    geometry = make_random_obn_geometry(
        model,
        config.survey.n_receivers,
        config.survey.n_sources,
        config.seed,
        config.survey.record_time,
        dt,
    )
    plans = apply_reciprocity(geometry)
    nt = int(round(config.survey.record_time / dt)) + 1
    return model, true_model, plans, dt, nt


def add_point_scatterer(
    model: VelocityModel2D,
    x: float,
    z: float,
    relative_amplitude: float = 0.10,
    half_cells: int = 1,
) -> VelocityModel2D:
    """Velocity bump over a (2*half_cells+1)^2 patch centered at (x, z)."""
    iz = int(round((z - model.oz) / model.dz))
    ix = int(round((x - model.ox) / model.dx))
    if not (0 <= iz < model.nz and 0 <= ix < model.nx):
        raise ValueError("scatterer position outside the model")
    v = model.v.copy()
    z0, z1 = max(0, iz - half_cells), min(model.nz, iz + half_cells + 1)
    x0, x1 = max(0, ix - half_cells), min(model.nx, ix + half_cells + 1)
    v[z0:z1, x0:x1] *= 1.0 + relative_amplitude
    return VelocityModel2D(model.nz, model.nx, model.dz, model.dx, model.oz, model.ox, v)


def migrate_shot(config: PipelineConfig, shot_id: int) -> ImageGrid:
    """Model synthetic data for one shot and migrate it (one map job)."""
    model, true_model, plans, dt, nt = build_survey(config)
    plan = plans[shot_id]
    wavelet = ricker(config.wavelet.peak_frequency, dt, nt)
    rec_true, _ = forward_model(
        true_model, plan.source, wavelet, plan.receivers, dt, nt,
        shot_id=shot_id, store_wavefield=False,
    )
    rec_bg, _ = forward_model(
        model, plan.source, wavelet, plan.receivers, dt, nt,
        shot_id=shot_id, store_wavefield=False,
    )
    observed = dataclasses.replace(rec_true, traces=rec_true.traces - rec_bg.traces)
    return rtm_shot_image(model, plan, observed, wavelet)


# ---------------------------------------------------------------------------
# map phase: claim-file worker pool


def _task_dirs(out_dir: Path) -> dict[str, Path]:
    base = out_dir / "tasks"
    return {name: base / name for name in ("pending", "claimed", "done", "failed")}


def _atomic_write_json(path: Path, obj: dict) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(json.dumps(obj))
    os.replace(tmp, path)


def _map_worker(config_dict: dict, out_dir: str) -> None:
    """Worker process: claim pending shots FCFS, migrate, publish, repeat."""
    config = config_from_dict(config_dict)
    dirs = _task_dirs(Path(out_dir))
    store = BlobStore(config.store_root())
    queue = FileQueue(config.queue_root())
    pid = os.getpid()
    while True:
        pending = sorted(os.listdir(dirs["pending"]))
        if not pending:
            return
        claimed_path = None
        for name in pending:
            target = dirs["claimed"] / f"{Path(name).stem}.pid{pid}.json"
            try:
                os.replace(dirs["pending"] / name, target)
            except FileNotFoundError:
                continue  # another worker claimed it
            claimed_path = target
            break
        if claimed_path is None:
            continue
        task = json.loads(claimed_path.read_text())
        shot_id = task["shot_id"]
        attempt = task["attempt"]
        try:
            start = time.time()
            image = migrate_shot(config, shot_id)
            blob_id = store.put_image(image.to_blob(leaf_count=1))
            queue.enqueue(QueueMessage(blob_id=blob_id, leaf_count=1))
            end = time.time()
            trace = JobTrace(shot_id, pid, start, end, end - start, blob_id, attempt)
            _atomic_write_json(dirs["done"] / f"{shot_id:05d}.json", trace.to_dict())
            os.unlink(claimed_path)
        except Exception:
            traceback.print_exc(file=sys.stderr)
            # leave the claim in place; the orchestrator requeues or fails it
            os._exit(1)


def run_map_phase(config: PipelineConfig) -> list[JobTrace]:
    """Run every shot through a pool of worker processes; one trace per shot.

    A worker crash requeues its claimed shot once; a second failure marks it
    failed and fails the phase with the traces collected so far.
    """
    out_dir = Path(config.out_dir)
    n_shots = config.survey.n_receivers
    dirs = _task_dirs(out_dir)
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
        for old in d.iterdir():
            old.unlink()
    BlobStore(config.store_root())
    FileQueue(config.queue_root())
    for shot_id in range(n_shots):
        _atomic_write_json(
            dirs["pending"] / f"{shot_id:05d}.a1.json", {"shot_id": shot_id, "attempt": 1}
        )

    ctx = mp.get_context("spawn")
    cfg_dict = config.to_dict()
    procs: list = []

    def spawn() -> None:
        p = ctx.Process(target=_map_worker, args=(cfg_dict, str(out_dir)), daemon=True)
        p.start()
        procs.append(p)

    for _ in range(min(config.map.workers, n_shots)):
        spawn()

    failed_msgs: list[str] = []
    try:
        while True:
            alive_pids = {p.pid for p in procs if p.is_alive()}
            for entry in sorted(os.listdir(dirs["claimed"])):
                parts = entry.rsplit(".", 2)  # <shot>.a<N>.pid<P>.json
                if len(parts) != 3 or not parts[1].startswith("pid"):
                    continue
                pid = int(parts[1][3:])
                if pid in alive_pids:
                    continue
                claim = dirs["claimed"] / entry
                task = json.loads(claim.read_text())
                shot_id, attempt = task["shot_id"], task["attempt"]
                if (dirs["done"] / f"{shot_id:05d}.json").exists():
                    claim.unlink()
                elif attempt >= config.map.max_attempts:
                    os.replace(claim, dirs["failed"] / f"{shot_id:05d}.json")
                    failed_msgs.append(f"shot {shot_id} failed after {attempt} attempts")
                else:
                    _atomic_write_json(
                        dirs["pending"] / f"{shot_id:05d}.a{attempt + 1}.json",
                        {"shot_id": shot_id, "attempt": attempt + 1},
                    )
                    claim.unlink()

            done = len(os.listdir(dirs["done"]))
            if failed_msgs:
                break
            if done >= n_shots:
                break
            n_pending = len(os.listdir(dirs["pending"]))
            n_alive = len(alive_pids)
            if n_pending > 0 and n_alive < config.map.workers:
                spawn()
            time.sleep(_POLL)
    finally:
        for p in procs:
            p.join(timeout=30)
            if p.is_alive():
                p.terminate()
                p.join()

    traces = []
    for entry in sorted(os.listdir(dirs["done"])):
        traces.append(JobTrace(**json.loads((dirs["done"] / entry).read_text())))
    if failed_msgs:
        raise MapPhaseError("; ".join(failed_msgs), traces)
    return sorted(traces, key=lambda t: t.shot_id)


# ---------------------------------------------------------------------------
# full pipeline


def run_pipeline(config: PipelineConfig):
    """Map and reduce concurrently; returns (ImageGrid, ReductionReport, CostReport)."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    store = BlobStore(config.store_root())
    queue = FileQueue(config.queue_root())
    if queue.approximate_count() != 0:
        raise RuntimeError(
            f"queue at {config.queue_root()} is not empty; refusing to mix runs"
        )

    n_shots = config.survey.n_receivers
    red_cfg = ReductionConfig(
        total_leaves=n_shots,
        fan_in=config.reduce.fan_in,
        poll_interval=config.reduce.poll_interval,
        max_parallel_invocations=config.reduce.parallel,
        visibility_seconds=config.queue.visibility_seconds,
        batch_grace=config.reduce.batch_grace,
        singleton_grace=config.reduce.singleton_grace,
        deadline_seconds=config.reduce.deadline,
    )
    reduce_out: dict = {}
    abort = threading.Event()

    def _reduce():
        try:
            reduce_out["report"] = run_reduction_service(red_cfg, queue, store, stop_event=abort)
        except BaseException as exc:
            reduce_out["error"] = exc

    reducer_thread = threading.Thread(target=_reduce, name="reduction-service", daemon=True)
    reducer_thread.start()
    try:
        traces = run_map_phase(config)
    except BaseException:
        abort.set()
        reducer_thread.join()
        raise
    reducer_thread.join()
    if "error" in reduce_out:
        raise reduce_out["error"]
    report_red: ReductionReport = reduce_out["report"]

    final_blob = store.get_image(report_red.final_blob_id)
    if final_blob.leaf_count != n_shots:
        raise RuntimeError(
            f"final image merges {final_blob.leaf_count} leaves, expected {n_shots}"
        )
    final_image = ImageGrid.from_blob(final_blob)

    pricing = batchsim.PricingModel(
        config.pricing.on_demand_rate,
        config.pricing.low_priority_discount_factor,
        config.pricing.billing_granularity,
    )
    vm_counts = _parse_vm_counts(config.report.vm_counts, len(traces))
    cost = report(
        traces, pricing, out_dir=out_dir, vm_counts=vm_counts,
        headline_n_vms=config.map.workers,
    )

    (out_dir / "final_image.rtmb").write_bytes(encode_image(final_blob))
    _atomic_write_json(
        out_dir / "report.json",
        {
            "reduction": report_red.to_dict(),
            "cost": cost.to_dict(),
            "final_image_blob": report_red.final_blob_id,
            "n_shots": n_shots,
        },
    )
    return final_image, report_red, cost


def _parse_vm_counts(spec: str | None, n_jobs: int) -> list[int]:
    if spec:
        return [int(s) for s in spec.split(",")]
    counts, n = [], 1
    while n < n_jobs:
        counts.append(n)
        n *= 2
    counts.append(n_jobs)
    return counts


# ---------------------------------------------------------------------------
# reporting


def report(
    traces: list[JobTrace],
    pricing: batchsim.PricingModel,
    out_dir: str | Path = ".",
    vm_counts: list[int] | None = None,
    headline_n_vms: int | None = None,
) -> CostReport:
    """Write runtimes_sorted.csv and idle_cost_curve.csv; return the summary."""
    if not traces:
        raise ValueError("report needs at least one trace")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    durations = [t.wall_seconds for t in traces]
    mean_minutes = float(np.mean(durations)) / 60.0

    runtimes_csv = out_dir / "runtimes_sorted.csv"
    with open(runtimes_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["rank", "shot_id", "runtime_seconds"])
        ordered = sorted(traces, key=lambda t: t.wall_seconds)
        for rank, t in enumerate(ordered):
            w.writerow([rank, t.shot_id, f"{t.wall_seconds:.6f}"])

    jobs = [batchsim.JobSpec(t.shot_id, t.wall_seconds / 3600.0) for t in traces]
    if vm_counts is None:
        vm_counts = _parse_vm_counts(None, len(jobs))
    rows = batchsim.idle_cost_curve(jobs, vm_counts, pricing)
    curve_csv = out_dir / "idle_cost_curve.csv"
    with open(curve_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["n_vms", "makespan_h", "busy_vmh", "idle_vmh", "fixed_cost",
             "batch_cost", "ratio", "low_priority_cost"]
        )
        for r in rows:
            w.writerow(
                [r.n_vms, f"{r.makespan_h:.6f}", f"{r.busy_vmh:.6f}", f"{r.idle_vmh:.6f}",
                 f"{r.fixed_cost:.2f}", f"{r.batch_cost:.2f}", f"{r.ratio:.4f}",
                 f"{r.low_priority_cost:.2f}"]
            )

    n_head = headline_n_vms or vm_counts[-1]
    n_head = max(1, min(n_head, len(jobs)))
    fixed = batchsim.simulate_fixed_cluster(jobs, n_head, pricing)
    batch = batchsim.simulate_batch_pool(jobs, n_head, pricing)
    return CostReport(
        n_jobs=len(jobs),
        mean_runtime_minutes=mean_minutes,
        headline_n_vms=n_head,
        fixed_cost=fixed.cost,
        batch_cost=batch.cost,
        ratio=fixed.cost / batch.cost,
        low_priority_cost=batchsim.apply_low_priority(batch, pricing).cost,
        makespan_hours=fixed.makespan,
        runtimes_csv=str(runtimes_csv),
        curve_csv=str(curve_csv),
    )


def synthetic_reference_traces(
    n_jobs: int = 1500, minutes_per_job: float = 119.28
) -> list[JobTrace]:
    """Uniform traces reproducing the reference case-study workload."""
    secs = minutes_per_job * 60.0
    return [JobTrace(i, 0, 0.0, secs, secs, "", 1) for i in range(n_jobs)]
