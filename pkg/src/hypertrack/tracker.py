"""Frame-by-frame tracking-by-detection loop."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .association import AssociationConfig, associate, partition_detections
from .geometry import iou_matrix
from .kalman import KalmanConfig, KFState, kf_init, kf_predict, kf_update


class TrackState(enum.Enum):
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


@dataclass(frozen=True)
class TrackerConfig:
    window_len: int = 5
    lost_after: int = 1
    remove_after: int = 30
    min_hits: int = 2
    association: AssociationConfig = field(default_factory=AssociationConfig)

    def __post_init__(self):
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if not (1 <= self.lost_after <= self.remove_after):
            raise ValueError("need 1 <= lost_after <= remove_after")
        if self.min_hits < 1:
            raise ValueError("min_hits must be >= 1")


@dataclass
class Track:
    id: int
    history: deque
    frames: deque
    state: TrackState = TrackState.ACTIVE
    time_since_update: int = 0
    hits: int = 1
    confirmed: bool = False

    @property
    def box(self) -> np.ndarray:
        return self.history[-1]

    def history_array(self) -> np.ndarray:
        return np.array(self.history, dtype=np.float64)


# ---------------------------------------------------------------------------
# motion models


class MotionModel:
    """Hooks the tracker calls; subclasses override what they need."""

    def start(self, track: Track) -> None:
        pass

    def predict(self, tracks: list[Track]) -> np.ndarray:
        raise NotImplementedError

    def correct(self, track: Track, box: np.ndarray) -> None:
        pass

    def coast(self, track: Track) -> None:
        pass

    def drop(self, track: Track) -> None:
        pass


class EstimatorMotion(MotionModel):
    """Joint prediction for every live track with a :class:`HyperSSMNetwork`."""

    def __init__(self, network):
        self.network = network

    def predict(self, tracks):
        return self.network.predict_next([t.history_array() for t in tracks])


class KalmanMotion(MotionModel):
    def __init__(self, cfg: KalmanConfig = KalmanConfig()):
        self.cfg = cfg
        self._states: dict[int, KFState] = {}
        self._priors: dict[int, KFState] = {}

    def start(self, track):
        self._states[track.id] = kf_init(track.box, self.cfg)

    def predict(self, tracks):
        out = np.zeros((len(tracks), 4))
        for i, t in enumerate(tracks):
            prior = kf_predict(self._states[t.id], self.cfg)
            self._priors[t.id] = prior
            out[i] = prior.box
        return out

    def correct(self, track, box):
        self._states[track.id] = kf_update(self._priors.pop(track.id), box, self.cfg)

    def coast(self, track):
        self._states[track.id] = self._priors.pop(track.id)

    def drop(self, track):
        self._states.pop(track.id, None)
        self._priors.pop(track.id, None)


class ConstantPositionMotion(MotionModel):
    def predict(self, tracks):
        return np.array([t.box for t in tracks], dtype=np.float64).reshape(-1, 4)


# ---------------------------------------------------------------------------


class Tracker:
    def __init__(self, motion: MotionModel, cfg: TrackerConfig = TrackerConfig()):
        self.motion = motion
        self.cfg = cfg
        self.tracks: list[Track] = []
        self.removed: list[Track] = []
        self.last_frame: int | None = None
        self.first_frame: int | None = None
        self._next_id = 1

    @property
    def live_tracks(self) -> list[Track]:
        return [t for t in self.tracks if t.state is not TrackState.REMOVED]

    def _new_track(self, frame: int, box: np.ndarray) -> Track:
        L = self.cfg.window_len
        track = Track(self._next_id, deque([box.copy()], maxlen=L), deque([frame], maxlen=L))
        self._next_id += 1
        track.confirmed = frame == self.first_frame or self.cfg.min_hits <= 1
        self.motion.start(track)
        self.tracks.append(track)
        return track

    def _remove(self, track: Track) -> None:
        track.state = TrackState.REMOVED
        self.motion.drop(track)

    def step(self, frame: int, boxes: np.ndarray, scores: np.ndarray) -> list[tuple[int, np.ndarray]]:
        """Process one frame; returns ``(track id, box)`` for confirmed tracks matched this frame."""
        if self.last_frame is not None and frame <= self.last_frame:
            raise ValueError(f"frame {frame} arrives after frame {self.last_frame}")
        if self.first_frame is None:
            self.first_frame = frame
        self.last_frame = frame
        boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        scores = np.asarray(scores, dtype=np.float64)
        acfg = self.cfg.association

        live = self.live_tracks
        preds = self.motion.predict(live) if live else np.zeros((0, 4))
        tiers = partition_detections(boxes, scores, acfg.tau_high, acfg.tau_low, acfg.nms_thresh)
        result = associate(preds, boxes, tiers, acfg)

        anchors = []
        for ti, dj in result.matches:
            track = live[ti]
            track.history.append(boxes[dj].copy())
            track.frames.append(frame)
            track.time_since_update = 0
            track.hits += 1
            track.state = TrackState.ACTIVE
            if track.hits >= self.cfg.min_hits:
                track.confirmed = True
            self.motion.correct(track, boxes[dj])
            anchors.append(boxes[dj])

        for ti in result.unmatched_tracks:
            track = live[ti]
            track.time_since_update += 1
            if not track.confirmed:
                self._remove(track)
                continue
            track.history.append(preds[ti].copy())
            track.frames.append(frame)
            self.motion.coast(track)
            if track.time_since_update >= self.cfg.remove_after:
                self._remove(track)
            elif track.time_since_update >= self.cfg.lost_after:
                track.state = TrackState.LOST

        self.init_tracks(frame, boxes, scores, result.unmatched_dets[0], anchors)

        self.removed.extend(t for t in self.tracks if t.state is TrackState.REMOVED)
        self.tracks = [t for t in self.tracks if t.state is not TrackState.REMOVED]
        return [(t.id, t.box.copy()) for t in self.tracks
                if t.state is TrackState.ACTIVE and t.time_since_update == 0 and t.confirmed]

    def init_tracks(self, frame: int, boxes: np.ndarray, scores: np.ndarray, candidates: list[int],
                    anchors: list) -> list[Track]:
        """Spawn tracks from unmatched high detections that survive NMS against matched anchors."""
        if not candidates:
            return []
        thresh = self.cfg.association.nms_thresh
        # anchors act as score-1.0 boxes that are always kept
        kept = [np.asarray(a, dtype=np.float64) for a in anchors]
        order = sorted(candidates, key=lambda j: (-scores[j], j))
        spawned = []
        for j in order:
            if kept and iou_matrix(boxes[j], np.array(kept)).max() >= thresh:
                continue
            kept.append(boxes[j])
            spawned.append(self._new_track(frame, boxes[j]))
        return spawned


def run_sequence(frames, motion: MotionModel, cfg: TrackerConfig = TrackerConfig()) -> dict[int, dict[int, np.ndarray]]:
    """Track an iterable of ``(frame, boxes, scores)``; returns frame -> {track id: box}."""
    tracker = Tracker(motion, cfg)
    results: dict[int, dict[int, np.ndarray]] = {}
    for frame, boxes, scores in frames:
        results[frame] = dict(tracker.step(frame, boxes, scores))
    return results


def scenario_frames(scenario):
    for f in range(1, scenario.frames + 1):
        boxes, scores = scenario.det_arrays(f)
        yield f, boxes, scores
