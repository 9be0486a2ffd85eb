"""Frame payload formats and corpus generation.

Three on-disk shapes live here:

* directory-of-frames container: ``frame-%06d.<ext>`` files plus a
  ``manifest`` text file (``width=``, ``height=``, ``frame_rate=``,
  ``count=`` lines).  Round trips are bit-exact.
* single-file video container: a magic header, a JSON metadata line and
  length-prefixed frame blobs.  Stands in for encoded video so the core
  pipeline needs no codec.
* synthetic scene frames: one JSON record per frame (vehicles with
  positions, kinds, colors) used to build deterministic camera corpora
  for the five scene complexity levels.
"""
from __future__ import annotations

import json
import random
import re
import struct
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyFramesDir, EmptyVideo, SourceNotFound

ENCODINGS = ("raw-synthetic", "jpeg", "png")

_ENCODING_EXT = {"raw-synthetic": "rsf", "jpeg": "jpg", "png": "png"}
_EXT_ENCODING = {v: k for k, v in _ENCODING_EXT.items()}

_FRAME_RE = re.compile(r"^frame-(\d{6})\.(\w+)$")

VIDEO_MAGIC = b"CEPV1\n"


def encoding_extension(encoding: str) -> str:
    return _ENCODING_EXT[encoding]


def extension_encoding(ext: str) -> str:
    return _EXT_ENCODING.get(ext.lstrip(".").lower(), "raw-synthetic")


# --- scene complexity levels ------------------------------------------------

_VEHICLE_KINDS = ("car", "van", "truck", "motorcycle", "bus")
_COLORS = ("red", "blue", "white", "black", "silver", "green", "yellow")


@dataclass(frozen=True)
class ComplexityLevel:
    """Scene difficulty descriptor used to parameterize synthetic corpora."""

    level: int
    description: str
    base_object_count: int
    vehicle_kinds: tuple[str, ...]
    motion_pattern: str
    clutter: float
    lighting: str
    viewpoint: str
    speed_factor: float


COMPLEXITY_LEVELS: dict[int, ComplexityLevel] = {
    1: ComplexityLevel(
        level=1,
        description="One car moving through an open, uncluttered scene.",
        base_object_count=1,
        vehicle_kinds=("car",),
        motion_pattern="single-lane",
        clutter=0.0,
        lighting="daylight",
        viewpoint="roadside",
        speed_factor=1.0,
    ),
    2: ComplexityLevel(
        level=2,
        description="A handful of cars passing through an uncluttered scene.",
        base_object_count=3,
        vehicle_kinds=("car",),
        motion_pattern="one-direction",
        clutter=0.15,
        lighting="daylight",
        viewpoint="roadside",
        speed_factor=1.0,
    ),
    3: ComplexityLevel(
        level=3,
        description="Mixed vehicle types flowing in both directions at once.",
        base_object_count=6,
        vehicle_kinds=("car", "van", "truck", "motorcycle"),
        motion_pattern="bidirectional",
        clutter=0.35,
        lighting="dusk",
        viewpoint="roadside",
        speed_factor=1.0,
    ),
    4: ComplexityLevel(
        level=4,
        description="Aerial view of vehicles crossing in several directions "
        "through a cluttered scene.",
        base_object_count=10,
        vehicle_kinds=("car", "van", "truck", "motorcycle", "bus"),
        motion_pattern="multi-directional",
        clutter=0.6,
        lighting="daylight",
        viewpoint="aerial",
        speed_factor=1.0,
    ),
    5: ComplexityLevel(
        level=5,
        description="Fast-forwarded dense traffic in a cluttered scene under "
        "bright lights.",
        base_object_count=14,
        vehicle_kinds=("car", "van", "truck", "motorcycle", "bus"),
        motion_pattern="multi-directional",
        clutter=0.85,
        lighting="bright-lights",
        viewpoint="roadside",
        speed_factor=2.0,
    ),
}


def reference_description(level: ComplexityLevel) -> str:
    """Ground-truth style description derived from a corpus descriptor."""
    if level.base_object_count == 1:
        subject = "A single car"
    elif level.base_object_count <= 4:
        subject = "A few cars"
    else:
        kinds = ", ".join(level.vehicle_kinds[:-1]) + f" and {level.vehicle_kinds[-1]}"
        subject = f"Many vehicles ({kinds})"
    clutter = (
        "an uncluttered setting"
        if level.clutter < 0.3
        else "a cluttered setting with competing background detail"
    )
    speed = " The footage runs faster than real time." if level.speed_factor > 1 else ""
    return (
        f"{subject} travel in a {level.motion_pattern} pattern through {clutter}, "
        f"seen from the {level.viewpoint} viewpoint under {level.lighting} conditions."
        f"{speed}"
    )


def scene_object_count(level: ComplexityLevel, frame_index: int) -> int:
    # Variation stays in {0, 1}: level base counts are spaced >= 2 apart, so
    # counts stay strictly ordered across levels at every timestep.
    return level.base_object_count + (frame_index % 2)


def render_scene_frame(
    level: ComplexityLevel,
    frame_index: int,
    width: int,
    height: int,
    frame_rate: int,
    seed: int,
) -> bytes:
    """Serialize one deterministic synthetic frame to payload bytes."""
    rng = random.Random(seed * 1_000_003 + level.level * 9_176 + frame_index)
    t_ms = int(frame_index * 1000 / frame_rate)
    count = scene_object_count(level, frame_index)
    objects = []
    for i in range(count):
        lane = i % max(2, int(2 + level.clutter * 4))
        direction = 1 if (i % 2 == 0 or level.motion_pattern == "one-direction") else -1
        speed_px = (30 + 10 * lane) * level.speed_factor * direction
        x = int((100 * i + speed_px * frame_index) % width)
        y = int((height / (count + 1)) * (i + 1))
        objects.append(
            {
                "kind": level.vehicle_kinds[i % len(level.vehicle_kinds)],
                "color": _COLORS[rng.randrange(len(_COLORS))],
                "x": x,
                "y": y,
                "heading": direction,
            }
        )
    record = {
        "t_ms": t_ms,
        "width": width,
        "height": height,
        "level": level.level,
        "lighting": level.lighting,
        "clutter": level.clutter,
        "viewpoint": level.viewpoint,
        "objects": objects,
    }
    return json.dumps(record, separators=(",", ":")).encode("utf-8")


def decode_scene(payload: bytes) -> dict:
    return json.loads(payload.decode("utf-8"))


# --- directory-of-frames container -------------------------------------------


@dataclass
class ContainerManifest:
    width: int
    height: int
    frame_rate: int
    count: int


@dataclass
class FramesContainer:
    """In-memory view of a directory-of-frames container."""

    manifest: ContainerManifest
    payloads: list[bytes]
    encoding: str = "raw-synthetic"


def manifest_text(m: ContainerManifest) -> str:
    return (
        f"width={m.width}\n"
        f"height={m.height}\n"
        f"frame_rate={m.frame_rate}\n"
        f"count={m.count}\n"
    )


def parse_manifest(text: str) -> ContainerManifest:
    values: dict[str, int] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or "=" not in line:
            continue
        key, _, raw = line.partition("=")
        values[key.strip()] = int(raw.strip())
    missing = {"width", "height", "frame_rate", "count"} - values.keys()
    if missing:
        raise SourceNotFound(f"manifest missing fields: {sorted(missing)}")
    return ContainerManifest(
        width=values["width"],
        height=values["height"],
        frame_rate=values["frame_rate"],
        count=values["count"],
    )


def write_frames_dir(path: Path, container: FramesContainer) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    # Rewrites may shrink the frame count; stale frame files would otherwise
    # leak into the next read.
    for child in path.iterdir():
        if _FRAME_RE.match(child.name):
            child.unlink()
    ext = encoding_extension(container.encoding)
    for i, payload in enumerate(container.payloads):
        (path / f"frame-{i:06d}.{ext}").write_bytes(payload)
    (path / "manifest").write_text(manifest_text(container.manifest))
    return path


def read_frames_dir(path: Path) -> FramesContainer:
    if not path.is_dir():
        raise SourceNotFound(f"frames directory not found: {path}")
    manifest_path = path / "manifest"
    if not manifest_path.is_file():
        raise SourceNotFound(f"manifest not found in {path}")
    manifest = parse_manifest(manifest_path.read_text())
    entries = []
    for child in path.iterdir():
        match = _FRAME_RE.match(child.name)
        if match:
            entries.append((int(match.group(1)), match.group(2), child))
    entries.sort(key=lambda e: e[0])
    if not entries:
        raise EmptyFramesDir(f"no frames in {path}")
    encoding = extension_encoding(entries[0][1])
    payloads = [child.read_bytes() for _, _, child in entries]
    return FramesContainer(manifest=manifest, payloads=payloads, encoding=encoding)


# --- single-file video container ----------------------------------------------


def write_video_file(path: Path, container: FramesContainer) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "width": container.manifest.width,
        "height": container.manifest.height,
        "frame_rate": container.manifest.frame_rate,
        "count": container.manifest.count,
        "encoding": container.encoding,
    }
    with open(path, "wb") as fh:
        fh.write(VIDEO_MAGIC)
        fh.write(json.dumps(meta, separators=(",", ":")).encode("utf-8") + b"\n")
        for payload in container.payloads:
            fh.write(struct.pack(">I", len(payload)))
            fh.write(payload)
    return path


def read_video_file(path: Path) -> FramesContainer:
    if not path.is_file():
        raise SourceNotFound(f"video artifact not found: {path}")
    data = path.read_bytes()
    if not data.startswith(VIDEO_MAGIC):
        raise SourceNotFound(f"not a video container: {path}")
    newline = data.index(b"\n", len(VIDEO_MAGIC))
    meta = json.loads(data[len(VIDEO_MAGIC):newline].decode("utf-8"))
    payloads = []
    offset = newline + 1
    while offset < len(data):
        (length,) = struct.unpack_from(">I", data, offset)
        offset += 4
        payloads.append(data[offset:offset + length])
        offset += length
    if not payloads:
        raise EmptyVideo(f"video container holds no frames: {path}")
    manifest = ContainerManifest(
        width=meta["width"],
        height=meta["height"],
        frame_rate=meta["frame_rate"],
        count=len(payloads),
    )
    return FramesContainer(
        manifest=manifest, payloads=payloads, encoding=meta.get("encoding", "raw-synthetic")
    )


def read_any_container(path: Path) -> FramesContainer:
    """Read either container shape; directories win over files."""
    if path.is_dir():
        return read_frames_dir(path)
    return read_video_file(path)


# --- synthetic corpus ----------------------------------------------------------


@dataclass
class SyntheticCorpusSpec:
    """Descriptor for a deterministic generated camera stream."""

    level: int
    frame_count: int = 24
    width: int = 1920
    height: int = 1080
    frame_rate: int = 24
    seed: int = 0
    label: str | None = None

    def complexity(self) -> ComplexityLevel:
        if self.level not in COMPLEXITY_LEVELS:
            raise ValueError(f"complexity level must be 1-5, got {self.level}")
        return COMPLEXITY_LEVELS[self.level]


def generate_corpus(spec: SyntheticCorpusSpec) -> FramesContainer:
    level = spec.complexity()
    payloads = [
        render_scene_frame(
            level, i, spec.width, spec.height, spec.frame_rate, spec.seed
        )
        for i in range(spec.frame_count)
    ]
    manifest = ContainerManifest(
        width=spec.width,
        height=spec.height,
        frame_rate=spec.frame_rate,
        count=spec.frame_count,
    )
    return FramesContainer(manifest=manifest, payloads=payloads)


RESOLUTIONS: dict[str, tuple[int, int]] = {
    "1080p": (1920, 1080),
    "720p": (1280, 720),
    "360p": (640, 360),
    "144p": (256, 144),
}
