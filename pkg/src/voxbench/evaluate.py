"""Evaluation pipeline: sensor fusion, map alignment, voxel classification,
and precision/recall metrics over an episode.

The pipeline is sequential for a single episode (integration order defines
map state); independent runs share nothing and may execute in parallel.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .actor import ActorSkeleton
from .episode import EpisodeHeader, SensorFrame, SkeletonPose, load_episode
from .geometry import ConvexPolyhedron, DegenerateGeometryError, convex_hull, points_in_hull
from .grid import (
    GridSpec,
    VoxelSet,
    keys_to_set,
    pack_keys,
    unpack_keys,
    voxel_centers,
    voxelize_packed,
)
from .simulate import ground_truth_points

# Modeled delay between a fused frame's stamp and the moment its integration
# result is visible in the map output stream. One fused period by default,
# mirroring a mapping server that is still integrating a cloud when the next
# one arrives.
DEFAULT_INTEGRATION_LATENCY_NS = 100_000_000


# ---------------------------------------------------------------------------
# Approximate-time fusion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FusedFrame:
    """Latest frame per sensor at emission time; stamped with their max."""

    frames: dict[int, SensorFrame]
    t_ns: int


class ApproximateTimeSync:
    """Per-sensor queues fused whenever every sensor has a pending frame.

    On emission the newest frame of each queue is taken and all queues are
    cleared, so no message is ever reused and fused stamps strictly increase.
    """

    def __init__(self, sensor_ids):
        self._queues: dict[int, list[SensorFrame]] = {int(s): [] for s in sensor_ids}
        if not self._queues:
            raise ValueError("at least one sensor id is required")
        self._last_ts: dict[int, int] = {int(s): -1 for s in sensor_ids}
        self._last_fused_ns: int | None = None
        self.published: dict[int, int] = {int(s): 0 for s in sensor_ids}

    def push(self, frame: SensorFrame) -> FusedFrame | None:
        sid = frame.sensor_id
        if sid not in self._queues:
            raise KeyError(f"unknown sensor id {sid}")
        if frame.t_ns < self._last_ts[sid]:
            raise ValueError(f"sensor {sid} frames must arrive time-ordered")
        self._last_ts[sid] = frame.t_ns
        self.published[sid] += 1
        self._queues[sid].append(frame)
        if any(not q for q in self._queues.values()):
            return None
        fused = {sid: q[-1] for sid, q in self._queues.items()}
        for q in self._queues.values():
            q.clear()
        t_ns = max(f.t_ns for f in fused.values())
        if self._last_fused_ns is not None and t_ns <= self._last_fused_ns:
            raise AssertionError("fused timestamps must strictly increase")
        self._last_fused_ns = t_ns
        return FusedFrame(frames=fused, t_ns=t_ns)

    def silent_sensors(self) -> list[int]:
        return [sid for sid, n in self.published.items() if n == 0]


class SnapshotAligner:
    """Ascending (timestamp, payload) stream answering earliest-at-or-after."""

    def __init__(self):
        self._snaps: deque[tuple[int, object]] = deque()
        self._last_ts: int | None = None

    def add(self, t_ns: int, payload) -> None:
        if self._last_ts is not None and t_ns < self._last_ts:
            raise ValueError("snapshot timestamps must ascend")
        self._last_ts = t_ns
        self._snaps.append((t_ns, payload))

    def earliest_at_or_after(self, t_ns: int):
        """(snapshot_ts, payload) or None if no snapshot is late enough yet.

        Queries must ascend: snapshots older than the query can never serve
        a later query and are discarded."""
        while self._snaps and self._snaps[0][0] < t_ns:
            self._snaps.popleft()
        if not self._snaps:
            return None
        return self._snaps[0]


def align_map_output(snapshots, fused_ts: int):
    """Earliest snapshot stamped at or after the fused timestamp, from an
    in-memory list of (timestamp, payload) pairs; None past the end."""
    aligner = SnapshotAligner()
    for t_ns, payload in snapshots:
        aligner.add(t_ns, payload)
    return aligner.earliest_at_or_after(fused_ts)


# ---------------------------------------------------------------------------
# Classification and metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassifiedVoxels:
    tp: VoxelSet
    fp: VoxelSet
    fn: VoxelSet


def _classify_packed(
    retrieved: np.ndarray,
    relevant: np.ndarray,
    hull: ConvexPolyhedron,
    spec: GridSpec,
    prefilter_lo: np.ndarray | None = None,
    prefilter_hi: np.ndarray | None = None,
):
    tp = np.intersect1d(retrieved, relevant, assume_unique=True)
    fn = np.setdiff1d(relevant, retrieved, assume_unique=True)
    candidates = np.setdiff1d(retrieved, relevant, assume_unique=True)
    if len(candidates):
        centers = voxel_centers(unpack_keys(candidates), spec)
        if prefilter_lo is not None:
            near = np.all((centers >= prefilter_lo) & (centers <= prefilter_hi), axis=1)
            candidates = candidates[near]
            centers = centers[near]
        if len(candidates):
            inside = points_in_hull(centers, hull)
            candidates = candidates[inside]
    fp = candidates
    return tp, fp, fn


def classify_voxels(
    retrieved: VoxelSet,
    relevant: VoxelSet,
    hull: ConvexPolyhedron,
    spec: GridSpec,
) -> ClassifiedVoxels:
    """Split backend output against ground truth: true positives are shared
    voxels, false negatives are missed ground truth, and false positives are
    the remaining retrieved voxels whose centers fall inside the actor hull.
    Retrieved voxels outside the hull belong to the scene and count nowhere.
    """
    retrieved_arr = (
        np.sort(pack_keys(np.array(sorted(retrieved), dtype=np.int64)))
        if retrieved
        else np.empty(0, dtype=np.int64)
    )
    relevant_arr = (
        np.sort(pack_keys(np.array(sorted(relevant), dtype=np.int64)))
        if relevant
        else np.empty(0, dtype=np.int64)
    )
    tp, fp, fn = _classify_packed(retrieved_arr, relevant_arr, hull, spec)
    return ClassifiedVoxels(tp=keys_to_set(tp), fp=keys_to_set(fp), fn=keys_to_set(fn))


def precision(tp: int, fp: int) -> float:
    total = tp + fp
    return tp / total if total else 0.0


def recall(tp: int, fn: int) -> float:
    total = tp + fn
    return tp / total if total else 0.0


def f_beta(p: float, r: float, beta: float) -> float:
    denom = beta * beta * p + r
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * p * r / denom


@dataclass(frozen=True)
class FrameRecord:
    t_ns: int
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    f2: float
    f3: float


def make_frame_record(t_ns: int, tp: int, fp: int, fn: int) -> FrameRecord:
    p = precision(tp, fp)
    r = recall(tp, fn)
    return FrameRecord(
        t_ns=t_ns,
        tp=tp,
        fp=fp,
        fn=fn,
        precision=p,
        recall=r,
        f1=f_beta(p, r, 1.0),
        f2=f_beta(p, r, 2.0),
        f3=f_beta(p, r, 3.0),
    )


@dataclass
class MetricsReport:
    """Per-frame records plus pooled-count metrics and per-frame means."""

    frames: list[FrameRecord]
    skip_reasons: dict[str, int] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def frames_evaluated(self) -> int:
        return len(self.frames)

    @property
    def frames_skipped(self) -> int:
        return sum(self.skip_reasons.values())

    @property
    def sum_tp(self) -> int:
        return sum(f.tp for f in self.frames)

    @property
    def sum_fp(self) -> int:
        return sum(f.fp for f in self.frames)

    @property
    def sum_fn(self) -> int:
        return sum(f.fn for f in self.frames)

    @property
    def precision(self) -> float:
        return precision(self.sum_tp, self.sum_fp)

    @property
    def recall(self) -> float:
        return recall(self.sum_tp, self.sum_fn)

    def f_score(self, beta: float) -> float:
        return f_beta(self.precision, self.recall, beta)

    @property
    def mean_precision(self) -> float:
        return sum(f.precision for f in self.frames) / len(self.frames) if self.frames else 0.0

    @property
    def mean_recall(self) -> float:
        return sum(f.recall for f in self.frames) / len(self.frames) if self.frames else 0.0


def aggregate(frames: list[FrameRecord], skip_reasons: dict[str, int] | None = None) -> MetricsReport:
    if not frames:
        raise ValueError("cannot aggregate an empty frame list")
    return MetricsReport(frames=list(frames), skip_reasons=dict(skip_reasons or {}))


# ---------------------------------------------------------------------------
# Per-frame evaluation
# ---------------------------------------------------------------------------

@dataclass
class FrameEvaluation:
    """Outcome of evaluating one fused frame against an aligned snapshot."""

    record: FrameRecord | None
    skip_reason: str | None = None
    classified: ClassifiedVoxels | None = None


def evaluate_frame(
    fused: FusedFrame,
    skeleton: ActorSkeleton,
    retrieved_packed: np.ndarray,
    spec: GridSpec,
    collect_sets: bool = False,
) -> FrameEvaluation:
    """Classify one fused frame: ground truth is the voxelized actor points
    of its member clouds, retrieved is the aligned occupied-voxel snapshot.

    Frames with no actor points, or too few non-coplanar points for a convex
    hull, are skipped with a reason instead of a record.
    """
    points = np.concatenate(
        [fused.frames[sid].points.astype(np.float64) for sid in sorted(fused.frames)]
    )
    actor_pts = ground_truth_points(points, skeleton)
    if len(actor_pts) == 0:
        return FrameEvaluation(record=None, skip_reason="empty_ground_truth")
    relevant = voxelize_packed(actor_pts, spec)
    try:
        hull = convex_hull(actor_pts)
    except DegenerateGeometryError:
        return FrameEvaluation(record=None, skip_reason="degenerate_hull")
    margin = spec.resolution * 1e-6
    tp, fp, fn = _classify_packed(
        retrieved_packed,
        relevant,
        hull,
        spec,
        prefilter_lo=actor_pts.min(axis=0) - margin,
        prefilter_hi=actor_pts.max(axis=0) + margin,
    )
    record = make_frame_record(fused.t_ns, len(tp), len(fp), len(fn))
    classified = None
    if collect_sets:
        classified = ClassifiedVoxels(
            tp=keys_to_set(tp), fp=keys_to_set(fp), fn=keys_to_set(fn)
        )
    return FrameEvaluation(record=record, classified=classified)


# ---------------------------------------------------------------------------
# Episode pipeline
# ---------------------------------------------------------------------------

@dataclass
class CaptureSnapshot:
    """Aligned map output and classification for one requested timestamp."""

    fused_t_ns: int
    snapshot_t_ns: int
    occupied_packed: np.ndarray
    classified: ClassifiedVoxels | None
    skipped_reason: str | None = None


@dataclass
class PipelineResult:
    report: MetricsReport
    capture: CaptureSnapshot | None = None


def run_pipeline(
    episode,
    backend,
    latency_ns: int = DEFAULT_INTEGRATION_LATENCY_NS,
    capture_at_ns: int | None = None,
    stop_after_capture: bool = False,
) -> PipelineResult:
    """Replay an episode through a backend and evaluate every fused frame.

    ``episode`` is a path or a preloaded ``(header, records)`` pair. Every
    fused frame is compared against the earliest map snapshot stamped at or
    after its own timestamp; snapshots are taken after each fused-frame
    integration and stamped ``latency_ns`` later, with one empty snapshot at
    the episode start.
    """
    if isinstance(episode, tuple):
        header, records = episode
    else:
        header, records = load_episode(episode)

    spec = backend.spec
    origins = {int(s["id"]): np.array(s["position"], dtype=np.float64) for s in header.sensors}
    sync = ApproximateTimeSync(origins.keys())
    aligner = SnapshotAligner()
    aligner.add(0, np.empty(0, dtype=np.int64))

    frames: list[FrameRecord] = []
    skip_reasons: dict[str, int] = {}
    diagnostics: list[str] = []
    pending: deque[tuple[FusedFrame, SkeletonPose | None]] = deque()
    capture: CaptureSnapshot | None = None
    capture_done = capture_at_ns is None
    current_pose: SkeletonPose | None = None

    def skip(reason: str) -> None:
        skip_reasons[reason] = skip_reasons.get(reason, 0) + 1

    def evaluate(fused: FusedFrame, pose: SkeletonPose | None, snapshot_ts: int, retrieved: np.ndarray) -> None:
        nonlocal capture
        want_capture = capture_at_ns is not None and fused.t_ns <= capture_at_ns
        if pose is None:
            skip("no_skeleton_pose")
            return
        skeleton = ActorSkeleton(
            joints={name: np.array(xyz, dtype=np.float64) for name, xyz in pose.joints.items()}
        )
        outcome = evaluate_frame(fused, skeleton, retrieved, spec, collect_sets=want_capture)
        if outcome.record is None:
            skip(outcome.skip_reason)
            if want_capture:
                capture = CaptureSnapshot(
                    fused.t_ns, snapshot_ts, retrieved, None, outcome.skip_reason
                )
            return
        frames.append(outcome.record)
        if want_capture:
            capture = CaptureSnapshot(
                fused.t_ns, snapshot_ts, retrieved, outcome.classified
            )

    def drain() -> None:
        nonlocal capture_done
        while pending:
            fused, pose = pending[0]
            hit = aligner.earliest_at_or_after(fused.t_ns)
            if hit is None:
                return
            pending.popleft()
            if capture_at_ns is not None and fused.t_ns > capture_at_ns:
                capture_done = True
            evaluate(fused, pose, hit[0], hit[1])

    stop = False
    for record in records:
        if isinstance(record, SkeletonPose):
            current_pose = record
            continue
        fused = sync.push(record)
        if fused is None:
            continue
        pending.append((fused, current_pose))
        drain()
        if stop_after_capture and capture_done and capture is not None:
            stop = True
            break
        for sid in sorted(fused.frames):
            member = fused.frames[sid]
            backend.integrate_cloud(origins[sid], member.points.astype(np.float64))
        aligner.add(fused.t_ns + latency_ns, backend.occupied_packed())
        drain()
        if stop_after_capture and capture_done and capture is not None:
            stop = True
            break

    if not stop:
        drain()
        for fused, _pose in pending:
            skip("unaligned_end_of_stream")
            diagnostics.append(f"no map snapshot at or after fused t={fused.t_ns}")
        silent = sync.silent_sensors()
        if silent:
            diagnostics.append(f"sensors never published: {silent}")

    report = MetricsReport(frames=frames, skip_reasons=skip_reasons, diagnostics=diagnostics)
    return PipelineResult(report=report, capture=capture)


def evaluate_episode(episode, backend, latency_ns: int = DEFAULT_INTEGRATION_LATENCY_NS) -> MetricsReport:
    return run_pipeline(episode, backend, latency_ns=latency_ns).report
