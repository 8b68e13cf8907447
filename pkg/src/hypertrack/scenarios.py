"""Seeded synthetic tracking scenes with a detection-noise model.

Coordinates live in a unit image frame. Three scene kinds:

``linear``
    independent objects at constant velocity, reflecting off the borders.
``group_nonlinear``
    groups sharing a drifting sinusoidal or circular base motion; members
    differ by a formation offset, a small phase offset and i.i.d. position
    noise, so their motion states are strongly correlated.
``occlusion``
    a base scene (``group_nonlinear`` by default) in which chosen targets
    lose every detection for fixed frame spans. Ground truth is untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .mot_io import MotRow, read_mot, write_mot
from .numeric import make_rng

KINDS = ("linear", "group_nonlinear", "occlusion")

COMMON_DEFAULTS: dict[str, Any] = {
    "frames": 200,
    "image_size": [1920, 1080],
    "sigma_jitter": 0.002,
    "p_miss": 0.05,
    "fp_rate": 0.5,
    "score_true": [0.55, 1.0],
    "score_false": [0.05, 0.6],
    "width_range": [0.025, 0.04],
    "height_range": [0.07, 0.11],
}

KIND_DEFAULTS: dict[str, dict[str, Any]] = {
    "linear": {
        "num_objects": 10,
        "speed_range": [0.003, 0.012],
    },
    "group_nonlinear": {
        "groups": 3,
        "members": 4,
        "patterns": ["sinusoid", "circle"],
        "drift_speed": [0.003, 0.007],
        "omega_range": [0.06, 0.14],
        "amplitude_ratio": [0.8, 1.8],
        "radius_range": [0.04, 0.07],
        "phase_jitter": 0.1,
        "member_spacing": [0.05, 0.13],
        "sigma_individual": 0.0015,
    },
}
KIND_DEFAULTS["occlusion"] = {
    "base": "group_nonlinear",
    "num_occluded": 3,
    "occlusion_len": 10,
    "occlusions": None,
    **KIND_DEFAULTS["group_nonlinear"],
    **{k: v for k, v in KIND_DEFAULTS["linear"].items()},
}


@dataclass
class Detection:
    box: np.ndarray
    score: float
    gt_id: int = -1  # -1 for false positives; unknown after loading from disk


@dataclass
class Scenario:
    kind: str
    frames: int
    gt: dict[int, dict[int, np.ndarray]]
    dets: dict[int, list[Detection]]
    seed: int
    params: dict[str, Any]
    occlusions: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def image_size(self) -> tuple[int, int]:
        w, h = self.params["image_size"]
        return int(w), int(h)

    def det_arrays(self, frame: int) -> tuple[np.ndarray, np.ndarray]:
        dets = self.dets.get(frame, [])
        boxes = np.array([d.box for d in dets], dtype=np.float64).reshape(-1, 4)
        scores = np.array([d.score for d in dets], dtype=np.float64)
        return boxes, scores

    def identical_to(self, other: "Scenario") -> bool:
        if (self.kind, self.frames, self.seed, self.occlusions) != (other.kind, other.frames, other.seed,
                                                                   other.occlusions):
            return False
        if json.dumps(self.params, sort_keys=True) != json.dumps(other.params, sort_keys=True):
            return False
        for f in range(1, self.frames + 1):
            a, b = self.gt.get(f, {}), other.gt.get(f, {})
            if a.keys() != b.keys() or any(a[k].tobytes() != b[k].tobytes() for k in a):
                return False
            da, db = self.dets.get(f, []), other.dets.get(f, [])
            if len(da) != len(db):
                return False
            for x, y in zip(da, db):
                if x.box.tobytes() != y.box.tobytes() or x.score != y.score or x.gt_id != y.gt_id:
                    return False
        return True


def resolve_params(kind: str, params: dict[str, Any] | None) -> dict[str, Any]:
    if kind not in KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}; expected one of {KINDS}")
    merged = {**COMMON_DEFAULTS, **KIND_DEFAULTS[kind]}
    for key, value in (params or {}).items():
        if key not in merged:
            raise ValueError(f"unknown parameter {key!r} for scenario kind {kind!r}")
        merged[key] = value
    if merged["frames"] < 1:
        raise ValueError("frames must be >= 1")
    if not (0.0 <= merged["p_miss"] <= 1.0):
        raise ValueError("p_miss must lie in [0, 1]")
    if merged["sigma_jitter"] < 0 or merged["fp_rate"] < 0:
        raise ValueError("sigma_jitter and fp_rate must be non-negative")
    for key in ("score_true", "score_false"):
        lo, hi = merged[key]
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"{key} must be a [lo, hi] range inside [0, 1]")
    return merged


def fold(x: np.ndarray, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Reflect ``x`` into ``[lo, hi]``; also returns the local slope (+1 or -1)."""
    span = hi - lo
    y = np.mod(x - lo, 2.0 * span)
    flipped = y > span
    return lo + np.where(flipped, 2.0 * span - y, y), np.where(flipped, -1.0, 1.0)


def _linear_motion(p: dict, rng: np.random.Generator) -> dict[int, np.ndarray]:
    t = np.arange(p["frames"], dtype=np.float64)
    tracks = {}
    for obj in range(1, p["num_objects"] + 1):
        w = rng.uniform(*p["width_range"])
        h = rng.uniform(*p["height_range"])
        lo = np.array([w / 2, h / 2])
        hi = 1.0 - lo
        start = rng.uniform(lo, hi)
        heading = rng.uniform(0, 2 * np.pi)
        speed = rng.uniform(*p["speed_range"])
        vel = speed * np.array([np.cos(heading), np.sin(heading)])
        xs, _ = fold(start[0] + vel[0] * t, lo[0], hi[0])
        ys, _ = fold(start[1] + vel[1] * t, lo[1], hi[1])
        tracks[obj] = np.stack([xs, ys, np.full_like(t, w), np.full_like(t, h)], axis=1)
    return tracks


def _group_motion(p: dict, rng: np.random.Generator) -> tuple[dict[int, np.ndarray], dict[int, int]]:
    t = np.arange(p["frames"], dtype=np.float64)
    tracks, membership = {}, {}
    obj = 1
    patterns = list(p["patterns"])
    for g in range(p["groups"]):
        pattern = patterns[g % len(patterns)]
        heading = rng.uniform(0, 2 * np.pi)
        drift_dir = np.array([np.cos(heading), np.sin(heading)])
        drift = rng.uniform(*p["drift_speed"])
        omega = rng.uniform(*p["omega_range"])
        phase = rng.uniform(0, 2 * np.pi)
        if pattern == "sinusoid":
            amp = rng.uniform(*p["amplitude_ratio"]) * drift / omega
            normal = np.array([-drift_dir[1], drift_dir[0]])

            def osc(delta, amp=amp, normal=normal, omega=omega, phase=phase):
                return amp * np.sin(omega * t + phase + delta)[:, None] * normal[None, :]
        elif pattern == "circle":
            amp = rng.uniform(*p["radius_range"])
            # keep the rotation dominant so member velocities never cancel out
            drift = min(drift, 0.3 * amp * omega)
            spin = rng.choice([-1.0, 1.0])

            def osc(delta, amp=amp, omega=omega, phase=phase, spin=spin):
                ang = spin * omega * t + phase + delta
                return amp * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            raise ValueError(f"unknown group pattern {pattern!r}")

        members = p["members"]
        cols = int(np.ceil(np.sqrt(members)))
        spacing = np.asarray(p["member_spacing"], dtype=np.float64)
        offsets = np.array([[(m % cols) - (cols - 1) / 2, (m // cols) - (members - 1) // cols / 2]
                            for m in range(members)]) * spacing
        sizes = [(rng.uniform(*p["width_range"]), rng.uniform(*p["height_range"])) for _ in range(members)]
        deltas = rng.uniform(-p["phase_jitter"], p["phase_jitter"], size=members)

        extent = np.abs(offsets).max(axis=0) + amp + np.array([max(s[0] for s in sizes),
                                                               max(s[1] for s in sizes)])
        lo, hi = extent, 1.0 - extent
        if np.any(hi <= lo):
            raise ValueError("group formation does not fit inside the image")
        start = rng.uniform(lo, hi)
        base = osc(0.0)
        unfolded = start[None, :] + drift * t[:, None] * drift_dir[None, :] + base
        cx, sx = fold(unfolded[:, 0], lo[0], hi[0])
        cy, sy = fold(unfolded[:, 1], lo[1], hi[1])
        slope = np.stack([sx, sy], axis=1)
        for m in range(members):
            dev = slope * (osc(deltas[m]) - base)
            noise = rng.normal(0.0, p["sigma_individual"], size=(len(t), 2))
            xy = np.stack([cx, cy], axis=1) + dev + offsets[m] + noise
            w, h = sizes[m]
            tracks[obj] = np.concatenate([xy, np.tile([w, h], (len(t), 1))], axis=1)
            membership[obj] = g
            obj += 1
    return tracks, membership


def _pick_occlusions(p: dict, ids: list[int], rng: np.random.Generator) -> list[tuple[int, int, int]]:
    if p["occlusions"] is not None:
        return [(int(i), int(a), int(b)) for i, a, b in p["occlusions"]]
    k = min(p["num_occluded"], len(ids))
    length = p["occlusion_len"]
    chosen = sorted(rng.choice(ids, size=k, replace=False).tolist())
    lo, hi = 10, p["frames"] - length - 5
    if hi <= lo:
        raise ValueError("sequence too short for the requested occlusions")
    return [(int(i), int(s), int(s) + length) for i, s in
            zip(chosen, rng.integers(lo, hi, size=k))]


def generate(kind: str, params: dict[str, Any] | None = None, seed: int = 0) -> Scenario:
    """Build a scenario; a pure function of ``(kind, params, seed)``."""
    p = resolve_params(kind, params)
    motion_kind = p["base"] if kind == "occlusion" else kind
    rng_motion = make_rng(seed, f"{motion_kind}-motion")
    if motion_kind == "linear":
        tracks = _linear_motion(p, rng_motion)
    elif motion_kind == "group_nonlinear":
        tracks, _ = _group_motion(p, rng_motion)
    else:
        raise ValueError(f"unsupported base kind {motion_kind!r}")

    occlusions: list[tuple[int, int, int]] = []
    if kind == "occlusion":
        occlusions = _pick_occlusions(p, sorted(tracks), make_rng(seed, "occlusion"))

    frames = p["frames"]
    gt = {f: {obj: tracks[obj][f - 1].copy() for obj in sorted(tracks)} for f in range(1, frames + 1)}
    dets = _detections(gt, p, occlusions, make_rng(seed, "detections"))
    return Scenario(kind, frames, gt, dets, int(seed), p, occlusions)


def _detections(gt, p, occlusions, rng) -> dict[int, list[Detection]]:
    sigma = p["sigma_jitter"]
    out: dict[int, list[Detection]] = {}
    for f in sorted(gt):
        frame_dets = []
        for obj, box in gt[f].items():
            hidden = any(o == obj and a <= f < b for o, a, b in occlusions)
            missed = rng.random() < p["p_miss"]
            jitter = rng.normal(0.0, sigma, size=4)
            score = rng.uniform(*p["score_true"])
            if hidden or missed:
                continue
            noisy = box + jitter
            noisy[2:] = np.maximum(noisy[2:], 0.2 * box[2:])
            frame_dets.append(Detection(noisy, float(score), obj))
        for _ in range(rng.poisson(p["fp_rate"])):
            w = rng.uniform(*p["width_range"])
            h = rng.uniform(*p["height_range"])
            cx, cy = rng.uniform(0.05, 0.95, size=2)
            frame_dets.append(Detection(np.array([cx, cy, w, h]), float(rng.uniform(*p["score_false"])), -1))
        order = rng.permutation(len(frame_dets))
        out[f] = [frame_dets[i] for i in order]
    return out


# ---------------------------------------------------------------------------
# archive: <dir>/gt.txt, <dir>/det.txt (pixel units), <dir>/meta (JSON)


def _scale(size) -> np.ndarray:
    w, h = size
    return np.array([w, h, w, h], dtype=np.float64)


def gt_rows(scenario: Scenario) -> list[MotRow]:
    s = _scale(scenario.image_size)
    return [MotRow.from_center(f, obj, box * s, 1.0)
            for f in sorted(scenario.gt) for obj, box in sorted(scenario.gt[f].items())]


def det_rows(scenario: Scenario) -> list[MotRow]:
    s = _scale(scenario.image_size)
    return [MotRow.from_center(f, -1, d.box * s, d.score)
            for f in sorted(scenario.dets) for d in scenario.dets[f]]


def write_scenario(scenario: Scenario, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_mot(gt_rows(scenario), out / "gt.txt")
    # detections keep their in-frame order; write_mot's sort is stable
    write_mot(det_rows(scenario), out / "det.txt")
    meta = {
        "kind": scenario.kind,
        "frames": scenario.frames,
        "seed": scenario.seed,
        "image_size": list(scenario.image_size),
        "params": scenario.params,
        "occlusions": [list(o) for o in scenario.occlusions],
    }
    (out / "meta").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def rows_to_frames(frames: dict[int, list[MotRow]], image_size) -> dict[int, dict[int, np.ndarray]]:
    s = _scale(image_size)
    return {f: {r.id: r.box / s for r in rows} for f, rows in frames.items()}


def load_scenario(path) -> Scenario:
    path = Path(path)
    meta = json.loads((path / "meta").read_text())
    size = meta["image_size"]
    s = _scale(size)
    gt = rows_to_frames(read_mot(path / "gt.txt"), size)
    det_frames = read_mot(path / "det.txt")
    dets = {f: [Detection(r.box / s, r.conf, -2) for r in det_frames.get(f, [])]
            for f in range(1, meta["frames"] + 1)}
    for f in range(1, meta["frames"] + 1):
        gt.setdefault(f, {})
    return Scenario(meta["kind"], meta["frames"], gt, dets, meta["seed"], meta["params"],
                    [tuple(o) for o in meta.get("occlusions", [])])
