"""Bit-exact file formats for volumes, labels, features, and filter banks.

RVOL is the project-native raw-volume format.  Byte layout, all multi-byte
fields little-endian regardless of host:

    offset  size  field
    0       4     magic "RVL1"
    4       4     nx (uint32)
    8       4     ny (uint32)
    12      4     nz (uint32)
    16      4     nc (uint32, channel count)
    20      4     dtype code (uint32): 1 = float32, 2 = float64, 3 = uint8
    24      -     payload: nc * nx * ny * nz values, channel-major, each
                  channel in x-fastest linear order (x + nx*(y + ny*z))

Feature tensors are stored as an RVOL record with one channel per feature
plus a JSON sidecar (same path + ".json") naming each feature.  A filter
bank is a directory of single-channel RVOL files plus a "manifest.json"
listing file order and scales.  Case manifests are line-oriented text (see
:func:`read_case_manifest`).

A minimal reader for uncompressed single-file NIfTI-1 scans is included for
ingesting externally produced volumes; orientation metadata is parsed but
not applied.
"""

import json
import os
import struct

import numpy as np

from .dog import FilterBank
from .features import FeatureTensor
from .volume import LabelVolume, MultiChannelVolume, Volume3D

RVOL_MAGIC = b"RVL1"
RVOL_HEADER_SIZE = 24

_RVOL_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("u1")}
_BANK_MANIFEST = "manifest.json"


class FormatError(ValueError):
    """A file does not conform to its declared format."""


class UnsupportedFormatError(FormatError):
    """A file is recognized but uses an unsupported variant."""


def _as_channels(volume):
    if isinstance(volume, Volume3D):
        return [volume.data], volume.dims
    if isinstance(volume, MultiChannelVolume):
        return [ch.data for ch in volume.channels], volume.dims
    if isinstance(volume, LabelVolume):
        return [volume.labels], volume.dims
    raise TypeError(f"cannot serialize {type(volume).__name__}")


def write_rvol(volume, dtype: int, path):
    """Write a volume, label map, or channel stack as an RVOL file.

    dtype is the RVOL code (1 float32, 2 float64, 3 uint8).  Writing real
    data as uint8 requires integer values in [0, 255]; float32 narrows with
    round-to-nearest-even.
    """
    if dtype not in _RVOL_DTYPES:
        raise ValueError(f"unknown RVOL dtype code {dtype}")
    channels, dims = _as_channels(volume)
    target = _RVOL_DTYPES[dtype]
    if dtype == 3:
        for ch in channels:
            if not np.all(ch == np.round(ch)):
                raise ValueError("uint8 RVOL requires integer-valued data")
            if ch.min() < 0 or ch.max() > 255:
                raise ValueError("uint8 RVOL requires values in [0, 255]")
    header = RVOL_MAGIC + struct.pack("<5I", *dims, len(channels), dtype)
    with open(path, "wb") as fh:
        fh.write(header)
        for ch in channels:
            fh.write(np.asarray(ch).astype(target).ravel(order="F").tobytes())


def read_rvol(path, as_labels: bool = False):
    """Read an RVOL file.

    Returns a MultiChannelVolume with generic channel names, or a
    LabelVolume when ``as_labels`` is set (requires a single uint8 channel).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < RVOL_HEADER_SIZE or blob[:4] != RVOL_MAGIC:
        raise FormatError(
            f"{path}: bad magic {blob[:4]!r} at byte offset 0, expected {RVOL_MAGIC!r}"
        )
    nx, ny, nz, nc, dtype = struct.unpack("<5I", blob[4:RVOL_HEADER_SIZE])
    if min(nx, ny, nz, nc) < 1:
        raise FormatError(f"{path}: non-positive dims ({nx}, {ny}, {nz}, nc={nc})")
    if dtype not in _RVOL_DTYPES:
        raise FormatError(f"{path}: unknown dtype code {dtype} at byte offset 20")
    np_dtype = _RVOL_DTYPES[dtype]
    expected = nx * ny * nz * nc * np_dtype.itemsize
    actual = len(blob) - RVOL_HEADER_SIZE
    if actual != expected:
        raise FormatError(
            f"{path}: payload is {actual} bytes, header declares {expected}"
        )
    raw = np.frombuffer(blob, dtype=np_dtype, offset=RVOL_HEADER_SIZE)
    per = nx * ny * nz
    grids = [
        raw[c * per : (c + 1) * per].reshape((nx, ny, nz), order="F")
        for c in range(nc)
    ]
    if as_labels:
        if nc != 1:
            raise FormatError(f"{path}: label volume must have 1 channel, has {nc}")
        if dtype != 3:
            raise FormatError(f"{path}: label volume must use dtype 3, has {dtype}")
        return LabelVolume(grids[0].copy())
    return MultiChannelVolume(
        [Volume3D(g.astype(np.float64)) for g in grids],
        [f"ch{c}" for c in range(nc)],
    )


def write_features(features: FeatureTensor, path):
    """Write a feature tensor as RVOL (one channel per feature) + JSON sidecar."""
    stack = MultiChannelVolume(
        [Volume3D(features.data[..., i]) for i in range(features.feature_count)],
        features.feature_names,
    )
    write_rvol(stack, 2, path)
    with open(str(path) + ".json", "w") as fh:
        json.dump({"feature_names": features.feature_names}, fh, indent=1)


def read_features(path) -> FeatureTensor:
    """Read a feature tensor written by :func:`write_features`."""
    sidecar = str(path) + ".json"
    if not os.path.exists(sidecar):
        raise FormatError(f"{path}: missing feature manifest {sidecar}")
    with open(sidecar) as fh:
        meta = json.load(fh)
    names = meta.get("feature_names")
    stack = read_rvol(path)
    if not isinstance(names, list) or len(names) != stack.n_channels:
        raise FormatError(
            f"{sidecar}: feature_names does not match {stack.n_channels} channels"
        )
    data = np.stack([ch.data for ch in stack.channels], axis=-1)
    return FeatureTensor(data, names)


def write_bank(bank: FilterBank, directory):
    """Write a filter bank as a directory of RVOL files plus manifest.json."""
    os.makedirs(directory, exist_ok=True)
    files = []
    for i, f in enumerate(bank.filters):
        name = f"filter{i + 1:02d}.rvol"
        write_rvol(Volume3D(f.data), 2, os.path.join(directory, name))
        files.append(name)
    manifest = {
        "format": "gbmseg-bank-1",
        "support": bank.support,
        "sigmas": bank.sigmas,
        "kinds": bank.kinds,
        "files": files,
    }
    with open(os.path.join(directory, _BANK_MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=1)


def read_bank(directory) -> FilterBank:
    """Read a filter bank directory written by :func:`write_bank`."""
    manifest_path = os.path.join(directory, _BANK_MANIFEST)
    if not os.path.exists(manifest_path):
        raise FormatError(f"{directory}: missing {_BANK_MANIFEST}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "gbmseg-bank-1":
        raise FormatError(f"{manifest_path}: unknown format {manifest.get('format')!r}")
    filters = []
    for name in manifest["files"]:
        stack = read_rvol(os.path.join(directory, name))
        if stack.n_channels != 1:
            raise FormatError(f"{name}: bank filters must be single-channel")
        filters.append(stack.channels[0])
    return FilterBank(
        filters=filters,
        sigmas=manifest["sigmas"],
        kinds=manifest.get("kinds") or [],
    )


# --- NIfTI-1 ingestion -----------------------------------------------------

_NIFTI_DTYPES = {2: "u1", 4: "i2", 16: "f4"}


def read_nifti1(path):
    """Read an uncompressed single-file NIfTI-1 volume.

    Supports datatypes uint8, int16, and float32; values are converted to
    float64 with the header's scl_slope/scl_inter scaling applied when set
    (slope of 0 means unscaled, per the format's convention).  Returns
    (Volume3D, metadata dict); the metadata carries pixdim, datatype, and
    the raw scaling fields, and is not applied to the voxel grid.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] == b"\x1f\x8b":
        raise UnsupportedFormatError(f"{path}: gzip stream; only uncompressed NIfTI-1 is supported")
    if len(blob) < 348:
        raise UnsupportedFormatError(f"{path}: file shorter than the 348-byte header")
    magic = blob[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise UnsupportedFormatError(f"{path}: magic field is {magic!r}, not a NIfTI-1 file")
    if magic == b"ni1\x00":
        raise UnsupportedFormatError(f"{path}: magic 'ni1' (detached .hdr/.img) is unsupported")

    endian = "<"
    (sizeof_hdr,) = struct.unpack("<i", blob[0:4])
    if sizeof_hdr != 348:
        endian = ">"
        (sizeof_hdr,) = struct.unpack(">i", blob[0:4])
        if sizeof_hdr != 348:
            raise UnsupportedFormatError(f"{path}: sizeof_hdr field is {sizeof_hdr}, expected 348")

    dim = struct.unpack(endian + "8h", blob[40:56])
    ndim = dim[0]
    if ndim == 4 and dim[4] == 1:
        ndim = 3
    if ndim != 3:
        raise UnsupportedFormatError(f"{path}: dim[0] field is {dim[0]}, only 3-D volumes are supported")
    nx, ny, nz = dim[1], dim[2], dim[3]
    if min(nx, ny, nz) < 1:
        raise FormatError(f"{path}: non-positive dim fields ({nx}, {ny}, {nz})")

    (datatype,) = struct.unpack(endian + "h", blob[70:72])
    (bitpix,) = struct.unpack(endian + "h", blob[72:74])
    if datatype not in _NIFTI_DTYPES:
        raise UnsupportedFormatError(f"{path}: datatype field {datatype} is unsupported")
    np_dtype = np.dtype(endian + _NIFTI_DTYPES[datatype])
    if bitpix != np_dtype.itemsize * 8:
        raise FormatError(f"{path}: bitpix field {bitpix} disagrees with datatype {datatype}")

    pixdim = struct.unpack(endian + "8f", blob[76:108])
    (vox_offset,) = struct.unpack(endian + "f", blob[108:112])
    (scl_slope,) = struct.unpack(endian + "f", blob[112:116])
    (scl_inter,) = struct.unpack(endian + "f", blob[116:120])
    offset = int(vox_offset) if vox_offset else 352
    if offset < 348:
        raise FormatError(f"{path}: vox_offset field {vox_offset} points inside the header")

    count = nx * ny * nz
    expected = count * np_dtype.itemsize
    if len(blob) - offset < expected:
        raise FormatError(
            f"{path}: payload is {len(blob) - offset} bytes, expected {expected}"
        )
    raw = np.frombuffer(blob, dtype=np_dtype, count=count, offset=offset)
    data = raw.reshape((nx, ny, nz), order="F").astype(np.float64)
    if scl_slope != 0.0:
        data = data * np.float64(scl_slope) + np.float64(scl_inter)
    meta = {
        "pixdim": pixdim[1:4],
        "datatype": datatype,
        "scl_slope": scl_slope,
        "scl_inter": scl_inter,
        "endian": endian,
    }
    return Volume3D(data), meta


def read_scan(path):
    """Read a single-channel scan, sniffing RVOL vs NIfTI-1 by content."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == RVOL_MAGIC:
        stack = read_rvol(path)
        if stack.n_channels != 1:
            raise FormatError(f"{path}: expected a single-channel scan, found {stack.n_channels}")
        return stack.channels[0]
    volume, _ = read_nifti1(path)
    return volume


def read_labels(path) -> LabelVolume:
    """Read a label volume from RVOL (dtype 3) or NIfTI-1 with integer 0..4 values."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == RVOL_MAGIC:
        return read_rvol(path, as_labels=True)
    volume, _ = read_nifti1(path)
    return LabelVolume(volume.data)


# --- Case manifests ----------------------------------------------------------

def read_case_manifest(path):
    """Parse a line-oriented case manifest.

    Lines are whitespace-separated records; '#' starts a comment:

        case_id <id>
        channel <name> <relative-path>
        labels <relative-path>
        note <free text>

    Paths are resolved against the manifest's directory and must exist.
    Returns a dict with case_id, channels (name -> path), labels (or None),
    and notes.
    """
    base = os.path.dirname(os.path.abspath(path))
    case_id = None
    channels = {}
    labels = None
    notes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 1)
            key = parts[0]
            rest = parts[1] if len(parts) > 1 else ""
            if key == "case_id":
                case_id = rest.strip()
            elif key == "channel":
                sub = rest.split(None, 1)
                if len(sub) != 2:
                    raise FormatError(f"{path}:{lineno}: channel line needs a name and a path")
                name, rel = sub[0], sub[1].strip()
                if name in channels:
                    raise FormatError(f"{path}:{lineno}: duplicate channel name {name!r}")
                channels[name] = os.path.join(base, rel)
            elif key == "labels":
                labels = os.path.join(base, rest.strip())
            elif key == "note":
                notes.append(rest)
            else:
                raise FormatError(f"{path}:{lineno}: unknown manifest key {key!r}")
    if case_id is None:
        raise FormatError(f"{path}: missing case_id line")
    if not channels:
        raise FormatError(f"{path}: no channel lines")
    for name, p in list(channels.items()) + ([("labels", labels)] if labels else []):
        if not os.path.exists(p):
            raise FormatError(f"{path}: referenced file does not exist: {p}")
    return {"case_id": case_id, "channels": channels, "labels": labels, "notes": notes}


def write_case_manifest(path, case_id, channels, labels=None, notes=()):
    """Write a case manifest; channels is an ordered (name, relative-path) list."""
    lines = [f"case_id {case_id}"]
    lines += [f"channel {name} {rel}" for name, rel in channels]
    if labels is not None:
        lines.append(f"labels {labels}")
    lines += [f"note {n}" for n in notes]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
