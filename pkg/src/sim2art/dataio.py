"""On-disk dataset format, splits, and ingestion of externally produced sequences.

A sequence is one directory: ``manifest.json`` plus one binary blob per array.
Blobs carry an 8-byte magic, a u16 version, a dtype tag and a shape header,
all little-endian, so records round-trip bit-exactly and stay language-neutral.
Ground-truth joints/motions live in the manifest; big arrays in the blobs.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError
from .render import CameraPose
from .sequence import GroundTruthAnnotation, PointCloudSequence

FORMAT_VERSION = 1
BLOB_MAGIC = b"S2ARTBLB"
_DTYPE_TAGS = {"<f4": 1, "<i2": 2, "<f8": 3, "<i8": 4, "<i4": 5}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}

# array name -> (dtype, shape template); T/N/W/H resolved from the manifest
REQUIRED_ARRAYS = {
    "points": ("<f4", ("T", "N", 3)),
    "flow": ("<f4", ("T", "N", 3)),
    "semfeat": ("<f4", ("T", "N", 3)),
    "labels": ("<i2", ("T", "N")),
    "cam_rot": ("<f4", ("T", 3, 3)),
    "cam_trans": ("<f4", ("T", 3)),
    "cam_intr": ("<f4", ("T", 4)),
}


def write_blob(path: str, arr: np.ndarray):
    dtype = arr.dtype.newbyteorder("<").str
    if dtype not in _DTYPE_TAGS:
        raise FormatError(f"unsupported blob dtype {arr.dtype}")
    with open(path, "wb") as f:
        f.write(BLOB_MAGIC)
        f.write(struct.pack("<HBB", FORMAT_VERSION, _DTYPE_TAGS[dtype], arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def read_blob(path: str, name: str) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except FileNotFoundError:
        raise FormatError(f"missing blob for array {name!r}") from None
    if raw[:8] != BLOB_MAGIC:
        raise FormatError(f"bad magic in blob {name!r}")
    version, tag, ndim = struct.unpack_from("<HBB", raw, 8)
    if version != FORMAT_VERSION:
        raise FormatError(f"unknown format version {version} in blob {name!r}")
    if tag not in _TAG_DTYPES:
        raise FormatError(f"unknown dtype tag {tag} in blob {name!r}")
    shape = struct.unpack_from(f"<{ndim}I", raw, 12)
    dt = np.dtype(_TAG_DTYPES[tag])
    start = 12 + 4 * ndim
    nbytes = int(np.prod(shape)) * dt.itemsize
    if len(raw) - start != nbytes:
        raise FormatError(f"truncated blob for array {name!r}: "
                          f"expected {nbytes} data bytes, found {len(raw) - start}")
    return np.frombuffer(raw[start:], dtype=dt).reshape(shape)


@dataclass
class SequenceRecord:
    """Manifest + named arrays, exactly as stored on disk (float32/int16)."""

    manifest: dict
    arrays: dict

    def validate(self):
        man = self.manifest
        for key in ("format_version", "category", "seed", "T", "n_points", "units"):
            if key not in man:
                raise FormatError(f"manifest missing field {key!r}")
        if man["format_version"] != FORMAT_VERSION:
            raise FormatError(f"unknown format version {man['format_version']}")
        dims = {"T": man["T"], "N": man["n_points"]}
        for name, (dtype, template) in REQUIRED_ARRAYS.items():
            if name not in self.arrays:
                raise FormatError(f"missing array {name!r}")
            arr = self.arrays[name]
            want = tuple(dims.get(d, d) for d in template)
            if tuple(arr.shape) != want:
                raise FormatError(f"array {name!r} has shape {arr.shape}, expected {want}")
            if arr.dtype != np.dtype(dtype):
                raise FormatError(f"array {name!r} has dtype {arr.dtype}, expected {dtype}")
        return self

    def to_sequence(self):
        """Reconstruct (PointCloudSequence, GroundTruthAnnotation | None)."""
        man = self.manifest
        W, H = man.get("resolution", [2, 2])
        cams = [CameraPose(self.arrays["cam_rot"][t].astype(np.float64),
                           self.arrays["cam_trans"][t].astype(np.float64),
                           tuple(self.arrays["cam_intr"][t].astype(np.float64)),
                           (W, H))
                for t in range(man["T"])]
        seq = PointCloudSequence(self.arrays["points"].astype(np.float64),
                                 self.arrays["flow"].astype(np.float64),
                                 self.arrays["semfeat"].astype(np.float64),
                                 self.arrays["labels"].astype(np.int64), cams)
        gt = man.get("gt")
        ann = None
        if gt is not None:
            labels = seq.labels
            part_ids = np.asarray(gt["part_ids"], dtype=np.int64)
            masks = np.stack([labels == pid for pid in part_ids])
            ann = GroundTruthAnnotation(masks,
                                        np.asarray(gt["joint_types"], dtype=np.int64),
                                        np.asarray(gt["axes"], dtype=np.float64),
                                        np.asarray(gt["pivots"], dtype=np.float64),
                                        np.asarray(gt["motion"], dtype=np.float64))
        return seq, ann


def record_from_generated(gen) -> SequenceRecord:
    """Freeze a generated sequence into the on-disk representation."""
    seq, ann = gen.sequence, gen.annotation
    cams = seq.cameras
    manifest = {
        "format_version": FORMAT_VERSION,
        "category": gen.category,
        "seed": int(gen.seed),
        "T": int(seq.num_frames),
        "n_points": int(seq.num_points),
        "units": {"points": "m", "flow": "m", "revolute": "deg", "prismatic": "cm"},
        "resolution": list(cams[0].resolution),
        "normalization": None,
        "gt": {
            "part_ids": [int(p.part_id) for p in gen.model.parts],
            "joint_types": ann.joint_types.tolist(),
            "axes": ann.axes.tolist(),
            "pivots": ann.pivots.tolist(),
            "motion": ann.motion.tolist(),
        },
    }
    arrays = {
        "points": seq.points.astype("<f4"),
        "flow": seq.flow.astype("<f4"),
        "semfeat": seq.semfeat.astype("<f4"),
        "labels": seq.labels.astype("<i2"),
        "cam_rot": np.stack([c.rotation for c in cams]).astype("<f4"),
        "cam_trans": np.stack([c.translation for c in cams]).astype("<f4"),
        "cam_intr": np.array([c.intrinsics for c in cams]).astype("<f4"),
    }
    return SequenceRecord(manifest, arrays).validate()


def write_sequence(record: SequenceRecord, path: str):
    """Write one record directory atomically (temp dir + rename)."""
    record.validate()
    parent = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".tmp-seq-", dir=parent)
    try:
        manifest = dict(record.manifest)
        manifest["arrays"] = {
            name: {"dtype": arr.dtype.newbyteorder("<").str,
                   "shape": list(arr.shape), "file": f"{name}.bin"}
            for name, arr in record.arrays.items()}
        with open(os.path.join(tmp, "manifest.json"), "w") as f:
            json.dump(manifest, f, sort_keys=True, indent=2)
        for name, arr in record.arrays.items():
            write_blob(os.path.join(tmp, f"{name}.bin"), arr)
        if os.path.isdir(path):
            raise FormatError(f"refusing to overwrite existing sequence at {path}")
        os.replace(tmp, path)
    finally:
        if os.path.isdir(tmp):
            import shutil
            shutil.rmtree(tmp)


def read_sequence(path: str) -> SequenceRecord:
    mpath = os.path.join(path, "manifest.json")
    try:
        with open(mpath) as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise FormatError(f"missing manifest.json under {path}") from None
    meta = manifest.pop("arrays", None)
    if meta is None:
        raise FormatError("manifest missing field 'arrays'")
    arrays = {}
    for name, info in meta.items():
        arr = read_blob(os.path.join(path, info["file"]), name)
        if list(arr.shape) != list(info["shape"]):
            raise FormatError(f"array {name!r}: manifest shape {info['shape']} "
                              f"!= blob shape {list(arr.shape)}")
        if arr.dtype.newbyteorder("<").str != info["dtype"]:
            raise FormatError(f"array {name!r}: manifest dtype {info['dtype']} "
                              f"!= blob dtype {arr.dtype.str}")
        arrays[name] = arr
    return SequenceRecord(manifest, arrays).validate()


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list
    ratios: tuple = (0.70, 0.15, 0.15)

    def to_json(self) -> str:
        return json.dumps({"train": list(self.train), "val": list(self.val),
                           "test": list(self.test), "ratios": list(self.ratios)},
                          sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        d = json.loads(text)
        return cls(d["train"], d["val"], d["test"], tuple(d["ratios"]))

    def ids(self, name: str) -> list:
        if name not in ("train", "val", "test"):
            raise DomainError(f"unknown split {name!r}")
        return getattr(self, name)


def make_split(instance_ids, ratios=(0.70, 0.15, 0.15), seed: int = 0) -> DatasetSplit:
    """Instance-level split: floor val/test counts, remainders go to train."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise DomainError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    ids = sorted(str(i) for i in instance_ids)
    if len(set(ids)) != len(ids):
        raise DomainError("instance ids must be unique")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n = len(ids)
    n_val = int(np.floor(ratios[1] * n))
    n_test = int(np.floor(ratios[2] * n))
    n_train = n - n_val - n_test
    return DatasetSplit(order[:n_train], order[n_train:n_train + n_val],
                        order[n_train + n_val:], tuple(ratios))


def list_sequences(root: str) -> list:
    """Sorted sequence ids (subdirectory names holding a manifest)."""
    if not os.path.isdir(root):
        raise FormatError(f"dataset root {root} does not exist")
    return sorted(d for d in os.listdir(root)
                  if os.path.isfile(os.path.join(root, d, "manifest.json")))


def _load_npy(directory: str, name: str, required: bool = True):
    path = os.path.join(directory, f"{name}.npy")
    if not os.path.isfile(path):
        if required:
            raise FormatError(f"external sequence missing {name!r} ({name}.npy)")
        return None
    return np.load(path)


def _lift_depth(depth: np.ndarray, mask: np.ndarray, intr: np.ndarray,
                n_points: int, rng: np.random.Generator):
    """Back-project masked depth pixels at their centers; returns points + pixel ids."""
    H, W = depth.shape
    covered = np.flatnonzero(mask.reshape(-1) > 0)
    if covered.size == 0:
        raise FormatError("external depth frame has an empty mask")
    chosen = rng.choice(covered, size=n_points, replace=covered.size < n_points)
    px = (chosen % W).astype(np.float64) + 0.5
    py = (chosen // W).astype(np.float64) + 0.5
    z = depth.reshape(-1)[chosen].astype(np.float64)
    fx, fy, cx, cy = (float(v) for v in intr)
    pts = np.stack([(px - cx) / fx * z, (py - cy) / fy * z, z], axis=1)
    return pts, chosen


def import_external_sequence(directory: str, n_points: int = 2048,
                             seed: int = 0) -> SequenceRecord:
    """Adapter for precomputed real-world arrays (predict-only, no GT).

    Two layouts are accepted:
      * ``points.npy`` (T, N, 3) with matching ``flow.npy`` (T, N, 3);
      * ``depth.npy`` (T, H, W) + ``mask.npy`` (T, H, W) + ``intrinsics.npy``
        (4,) or (T, 4), with ``flow.npy`` given as (T, H, W, 3) maps.
    ``semfeat.npy`` is optional (zeros when absent: the no-semantics pathway);
    ``extrinsics.npy`` (T, 4, 4) camera-to-world transforms everything into
    the first camera's frame.
    """
    if not os.path.isdir(directory):
        raise FormatError(f"external sequence directory {directory} does not exist")
    rng = np.random.default_rng(seed)
    flow_in = _load_npy(directory, "flow")
    semfeat_in = _load_npy(directory, "semfeat", required=False)
    extr = _load_npy(directory, "extrinsics", required=False)
    points_in = _load_npy(directory, "points", required=False)

    if points_in is not None:
        points = np.asarray(points_in, dtype=np.float64)
        if points.ndim != 3 or points.shape[2] != 3:
            raise FormatError(f"points must be (T, N, 3), got {points.shape}")
        T, N = points.shape[:2]
        if flow_in.shape != points.shape:
            raise FormatError(f"flow shape {flow_in.shape} != points shape {points.shape}")
        flow = np.asarray(flow_in, dtype=np.float64)
        if semfeat_in is None:
            semfeat = np.zeros_like(points)
        elif semfeat_in.shape != points.shape:
            raise FormatError(f"semfeat shape {semfeat_in.shape} != points shape {points.shape}")
        else:
            semfeat = np.asarray(semfeat_in, dtype=np.float64)
        resolution = [2, 2]
        intr_rows = np.tile(np.array([1.0, 1.0, 0.5, 0.5]), (T, 1))
    else:
        depth = _load_npy(directory, "depth")
        mask = _load_npy(directory, "mask")
        intr = _load_npy(directory, "intrinsics")
        if depth is None or mask is None or intr is None:
            raise FormatError("external sequence needs points.npy or "
                              "depth.npy + mask.npy + intrinsics.npy")
        depth = np.asarray(depth, dtype=np.float64)
        if depth.ndim != 3:
            raise FormatError(f"depth must be (T, H, W), got {depth.shape}")
        T, H, W = depth.shape
        if mask.shape != depth.shape:
            raise FormatError(f"mask shape {mask.shape} != depth shape {depth.shape}")
        intr = np.asarray(intr, dtype=np.float64)
        intr_rows = np.tile(intr, (T, 1)) if intr.ndim == 1 else intr
        if intr_rows.shape != (T, 4):
            raise FormatError(f"intrinsics must be (4,) or (T, 4), got {intr.shape}")
        if flow_in.ndim != 4 or flow_in.shape != (T, H, W, 3):
            raise FormatError(f"flow must be (T, H, W, 3) maps when lifting from "
                              f"depth, got {flow_in.shape}")
        if semfeat_in is not None and semfeat_in.shape != (T, H, W, 3):
            raise FormatError(f"semfeat maps must be (T, H, W, 3), got {semfeat_in.shape}")
        N = n_points
        points = np.empty((T, N, 3))
        flow = np.empty((T, N, 3))
        semfeat = np.zeros((T, N, 3))
        for t in range(T):
            pts, chosen = _lift_depth(depth[t], mask[t], intr_rows[t], N, rng)
            points[t] = pts
            flow[t] = flow_in[t].reshape(-1, 3)[chosen]
            if semfeat_in is not None:
                semfeat[t] = semfeat_in[t].reshape(-1, 3)[chosen]
        resolution = [W, H]

    if extr is not None:
        extr = np.asarray(extr, dtype=np.float64)
        if extr.shape != (T, 4, 4):
            raise FormatError(f"extrinsics must be (T, 4, 4), got {extr.shape}")
        R0, t0 = extr[0, :3, :3], extr[0, :3, 3]
        for t in range(T):
            Rt, tt = extr[t, :3, :3], extr[t, :3, 3]
            world = points[t] @ Rt.T + tt
            points[t] = (world - t0) @ R0
            flow[t] = (flow[t] @ Rt.T) @ R0
        cam_rot = extr[:, :3, :3]
        cam_trans = extr[:, :3, 3]
    else:
        cam_rot = np.tile(np.eye(3), (T, 1, 1))
        cam_trans = np.zeros((T, 3))

    manifest = {
        "format_version": FORMAT_VERSION,
        "category": "external",
        "seed": int(seed),
        "T": int(T),
        "n_points": int(N),
        "units": {"points": "m", "flow": "m", "revolute": "deg", "prismatic": "cm"},
        "resolution": resolution,
        "normalization": None,
        "gt": None,
    }
    arrays = {
        "points": points.astype("<f4"),
        "flow": flow.astype("<f4"),
        "semfeat": semfeat.astype("<f4"),
        "labels": np.zeros((T, N), dtype="<i2"),
        "cam_rot": cam_rot.astype("<f4"),
        "cam_trans": cam_trans.astype("<f4"),
        "cam_intr": intr_rows.astype("<f4"),
    }
    return SequenceRecord(manifest, arrays).validate()
