"""File formats: .gsc Gaussian clouds, PFM depth, PLY points, scene directories.

The .gsc container is a single JSON header line followed by little-endian
float32 blocks in a fixed order (positions, rotations, scales, opacities, sh).
Scene directories hold cameras.json plus per-view PNG images and PFM depth.
"""

import json
import os

import numpy as np
from PIL import Image

from .scene import Camera, DepthMap, GaussianCloud, SceneBundle, ViewRecord

GSC_MAGIC = "GSC1"


class FormatError(ValueError):
    """Malformed container: bad magic, unparseable header, bad field types."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class StructuralError(ValueError):
    """Parsed fine but the content is inconsistent (truncated blocks, counts)."""


def save_cloud(path, cloud):
    cloud.validate()
    n = len(cloud)
    header = {"magic": GSC_MAGIC, "count": n, "sh_degree": cloud.sh_degree}
    blocks = [
        cloud.positions.astype("<f4"),
        cloud.rotations.astype("<f4"),
        cloud.scales.astype("<f4"),
        cloud.opacities.astype("<f4"),
        cloud.sh.astype("<f4"),
    ]
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("ascii") + b"\n")
        for block in blocks:
            f.write(np.ascontiguousarray(block).tobytes())


def load_cloud(path):
    with open(path, "rb") as f:
        data = f.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError("missing header newline", offset=len(data))
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"unparseable header: {e}", offset=0) from e
    if not isinstance(header, dict) or header.get("magic") != GSC_MAGIC:
        raise FormatError(f"bad magic {header.get('magic')!r}" if isinstance(header, dict) else "header is not an object", offset=0)
    try:
        n = int(header["count"])
        d = int(header["sh_degree"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad header fields: {e}", offset=0) from e
    if n < 0 or d < 0:
        raise FormatError("negative count or sh_degree", offset=0)
    k = (d + 1) ** 2
    body = data[nl + 1 :]
    shapes = [("positions", (n, 3)), ("rotations", (n, 4)), ("scales", (n, 3)), ("opacities", (n,)), ("sh", (n, 3, k))]
    want = sum(int(np.prod(s)) for _, s in shapes) * 4
    if len(body) != want:
        raise StructuralError(
            f"body holds {len(body)} bytes, header implies {want} "
            f"({n} gaussians, sh_degree {d})"
        )
    arrays = {}
    off = 0
    for name, shape in shapes:
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(body, dtype="<f4", count=count, offset=off).reshape(shape)
        off += count * 4
    cloud = GaussianCloud(**{k_: v.astype(np.float64) for k_, v in arrays.items()})
    return cloud.validate()


def write_pfm(path, values):
    """Grayscale PFM, little-endian (negative scale), rows bottom-up."""
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise ValueError("pfm writer expects a 2-D array")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(values[::-1]).astype("<f4").tobytes())


def read_pfm(path):
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic not in (b"Pf", b"PF"):
            raise FormatError(f"not a pfm file: magic {magic!r}", offset=0)
        dims = f.readline().split()
        if len(dims) != 2:
            raise FormatError("bad pfm dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        channels = 3 if magic == b"PF" else 1
        count = w * h * channels
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise StructuralError(f"pfm body truncated: {len(raw)} of {count * 4} bytes")
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(raw, dtype=dtype, count=count)
        data = data.reshape((h, w) if channels == 1 else (h, w, channels))
        return np.ascontiguousarray(data[::-1]).astype(np.float64)


def load_ply(path):
    """Point positions and uint8 colors from an ascii or binary-LE PLY."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise FormatError("not a ply file", offset=0)
        fmt = None
        count = None
        props = []
        in_vertex = False
        while True:
            line = f.readline()
            if not line:
                raise FormatError("unterminated ply header")
            parts = line.split()
            if not parts:
                continue
            if parts[0] == b"format":
                fmt = parts[1].decode()
            elif parts[0] == b"element":
                in_vertex = parts[1] == b"vertex"
                if in_vertex:
                    count = int(parts[2])
            elif parts[0] == b"property" and in_vertex:
                props.append((parts[1].decode(), parts[2].decode()))
            elif parts[0] == b"end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise FormatError(f"unsupported ply format {fmt!r}")
        if count is None:
            raise StructuralError("ply has no vertex element")
        names = [p[1] for p in props]
        for need in ("x", "y", "z"):
            if need not in names:
                raise StructuralError(f"ply vertex element lacks property {need!r}")
        has_color = all(c in names for c in ("red", "green", "blue"))
        type_map = {
            "char": "i1", "uchar": "u1", "short": "i2", "ushort": "u2",
            "int": "i4", "uint": "u4", "float": "f4", "double": "f8",
            "float32": "f4", "float64": "f8", "uint8": "u1", "int32": "i4",
        }
        if fmt == "ascii":
            rows = []
            for _ in range(count):
                line = f.readline().split()
                if len(line) != len(props):
                    raise StructuralError("ply ascii row width mismatch")
                rows.append([float(v) for v in line])
            table = np.asarray(rows, dtype=np.float64)
        else:
            try:
                dtype = np.dtype([(nm, "<" + type_map[t]) for t, nm in props])
            except KeyError as e:
                raise FormatError(f"unsupported ply property type {e}") from e
            raw = f.read(dtype.itemsize * count)
            if len(raw) != dtype.itemsize * count:
                raise StructuralError("ply body truncated")
            rec = np.frombuffer(raw, dtype=dtype, count=count)
            table = np.stack([rec[nm].astype(np.float64) for nm in names], axis=1)
    positions = np.stack([table[:, names.index(c)] for c in "xyz"], axis=1)
    if has_color:
        colors = np.stack(
            [table[:, names.index(c)] for c in ("red", "green", "blue")], axis=1
        )
        if colors.max(initial=0) > 1.0:
            colors = colors / 255.0
    else:
        colors = np.full_like(positions, 0.5)
    return positions, colors


def save_image(path, rgb):
    arr = np.clip(np.asarray(rgb), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(path)


def load_image(path):
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_scene(path, bundle):
    """Write a scene directory: cameras.json + per-view PNG and PFM files."""
    os.makedirs(path, exist_ok=True)
    cams = []
    for i, rec in enumerate(bundle.records):
        name = rec.name or f"view_{i:04d}"
        image_file = name + ".png"
        save_image(os.path.join(path, image_file), rec.image)
        entry = {
            "fx": rec.camera.fx, "fy": rec.camera.fy,
            "cx": rec.camera.cx, "cy": rec.camera.cy,
            "width": rec.camera.width, "height": rec.camera.height,
            "qvec": [float(v) for v in rec.camera.qvec],
            "tvec": [float(v) for v in rec.camera.tvec],
            "image": image_file,
            "split": rec.split,
        }
        if rec.depth is not None:
            depth_file = name + ".pfm"
            write_pfm(os.path.join(path, depth_file), rec.depth.values)
            entry["depth"] = depth_file
        cams.append(entry)
    with open(os.path.join(path, "cameras.json"), "w") as f:
        json.dump({"cameras": cams}, f, indent=1)


def load_scene(path):
    cam_path = os.path.join(path, "cameras.json")
    if not os.path.exists(cam_path):
        raise StructuralError(f"scene directory {path!r} lacks cameras.json")
    with open(cam_path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"cameras.json is not valid json: {e}") from e
    entries = doc.get("cameras")
    if not isinstance(entries, list):
        raise FormatError("cameras.json lacks a 'cameras' list")
    records = []
    for entry in entries:
        try:
            cam = Camera(
                fx=float(entry["fx"]), fy=float(entry["fy"]),
                cx=float(entry["cx"]), cy=float(entry["cy"]),
                width=int(entry["width"]), height=int(entry["height"]),
                qvec=np.asarray(entry["qvec"], dtype=np.float64),
                tvec=np.asarray(entry["tvec"], dtype=np.float64),
            )
            image_file = entry["image"]
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad camera entry: {e}") from e
        image_path = os.path.join(path, image_file)
        if not os.path.exists(image_path):
            raise StructuralError(f"referenced image {image_file!r} is missing")
        image = load_image(image_path)
        depth = None
        if entry.get("depth"):
            depth_path = os.path.join(path, entry["depth"])
            if not os.path.exists(depth_path):
                raise StructuralError(f"referenced depth {entry['depth']!r} is missing")
            depth = DepthMap(read_pfm(depth_path))
        records.append(
            ViewRecord(
                camera=cam,
                image=image,
                depth=depth,
                split=entry.get("split", "train"),
                name=os.path.splitext(image_file)[0],
            )
        )
    bundle = SceneBundle(records=records)
    ply = os.path.join(path, "points.ply")
    if os.path.exists(ply):
        bundle.init_points, bundle.init_colors = load_ply(ply)
    return bundle.validate()
