"""
MVL1 volume files and on-disk volume collections
=================================================

Layout (little-endian):
    0-3   magic "MVL1"
    4     version (1)
    5     modality code (0=S, 1=T)
    6     ap_label code (0=A, 1=P, 2=unknown)
    7     mask flag (0=no mask, 1=mask follows data, 2=mask only, no data)
    8-19  3 x u32 dims (D, H, W)
    20-31 3 x f32 spacing (mm)
    32-   f32 data in C order, then optional u8 mask in C order
"""
import json
import struct
from pathlib import Path

import numpy as np

from core.exceptions import VolumeFormatError
from core.logger import logger
from phantoms.entities import APLabel, Modality, Volume

MAGIC = b"MVL1"
VERSION = 1
HEADER = struct.Struct("<4sBBBB3I3f")

MASK_ABSENT, MASK_PRESENT, MASK_ONLY = 0, 1, 2

MODALITY_CODES = {Modality.S: 0, Modality.T: 1}
AP_CODES = {APLabel.A: 0, APLabel.P: 1, APLabel.UNKNOWN: 2}


def _header(
    dims: tuple[int, int, int],
    spacing: tuple[float, float, float],
    modality: Modality,
    ap_label: APLabel,
    mask_flag: int,
) -> bytes:
    return HEADER.pack(
        MAGIC, VERSION, MODALITY_CODES[modality], AP_CODES[ap_label], mask_flag, *dims, *spacing
    )


def encode_volume(v: Volume) -> bytes:
    """Serialize a volume to MVL1 bytes"""
    flag = MASK_ABSENT if v.mask is None else MASK_PRESENT
    parts = [_header(v.dims, v.spacing, v.modality, v.ap_label, flag), v.data.astype("<f4").tobytes(order="C")]
    if v.mask is not None:
        parts.append(v.mask.astype(np.uint8).tobytes(order="C"))
    return b"".join(parts)


def encode_mask(mask: np.ndarray, modality: Modality, spacing=(1.0, 1.0, 1.0)) -> bytes:
    """Mask-only MVL1 payload (used by the pseudo-label store)"""
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    label = APLabel.P if mask.any() else APLabel.A
    return _header(mask.shape, spacing, modality, label, MASK_ONLY) + mask.tobytes(order="C")


def _decode_header(buf: bytes) -> tuple:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise VolumeFormatError("bad magic, expected b'MVL1'", offset=0)
    if len(buf) < HEADER.size:
        raise VolumeFormatError("truncated header", offset=len(buf))
    _, version, modality_code, ap_code, mask_flag, d, h, w, *spacing = HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise VolumeFormatError(f"unsupported version {version}", offset=4)
    modalities = {code: m for m, code in MODALITY_CODES.items()}
    labels = {code: label for label, code in AP_CODES.items()}
    if modality_code not in modalities:
        raise VolumeFormatError(f"unknown modality code {modality_code}", offset=5)
    if ap_code not in labels:
        raise VolumeFormatError(f"unknown ap_label code {ap_code}", offset=6)
    if mask_flag not in (MASK_ABSENT, MASK_PRESENT, MASK_ONLY):
        raise VolumeFormatError(f"unknown mask flag {mask_flag}", offset=7)
    if min(d, h, w) == 0:
        raise VolumeFormatError(f"zero dimension in {(d, h, w)}", offset=8)
    return modalities[modality_code], labels[ap_code], mask_flag, (d, h, w), tuple(spacing)


def _check_length(buf: bytes, expected: int) -> None:
    if len(buf) < expected:
        raise VolumeFormatError(f"truncated payload, expected {expected} bytes", offset=len(buf))
    if len(buf) > expected:
        raise VolumeFormatError("trailing bytes after payload", offset=expected)


def decode_volume(buf: bytes, volume_id: str) -> Volume:
    """Parse MVL1 bytes into a Volume"""
    modality, ap_label, mask_flag, dims, spacing = _decode_header(buf)
    if mask_flag == MASK_ONLY:
        raise VolumeFormatError("file holds a mask only, not a volume", offset=7)

    n = int(np.prod(dims))
    data_end = HEADER.size + 4 * n
    _check_length(buf, data_end + (n if mask_flag == MASK_PRESENT else 0))

    data = np.frombuffer(buf, dtype="<f4", count=n, offset=HEADER.size).reshape(dims)
    mask = None
    if mask_flag == MASK_PRESENT:
        mask = np.frombuffer(buf, dtype=np.uint8, count=n, offset=data_end).reshape(dims)
        if not np.isin(mask, (0, 1)).all():
            raise VolumeFormatError("mask contains values outside {0, 1}", offset=data_end)

    return Volume(
        volume_id=volume_id,
        data=data.astype(np.float32),
        spacing=spacing,
        modality=modality,
        mask=None if mask is None else mask.copy(),
        ap_label=ap_label,
    )


def decode_mask(buf: bytes) -> np.ndarray:
    """Parse a mask-only MVL1 payload"""
    _, _, mask_flag, dims, _ = _decode_header(buf)
    if mask_flag != MASK_ONLY:
        raise VolumeFormatError("file is not a mask-only payload", offset=7)
    n = int(np.prod(dims))
    _check_length(buf, HEADER.size + n)
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=HEADER.size).reshape(dims).copy()


def save_volume(v: Volume, path: Path) -> None:
    Path(path).write_bytes(encode_volume(v))


def load_volume(path: Path) -> Volume:
    path = Path(path)
    return decode_volume(path.read_bytes(), volume_id=path.stem)


class VolumeRepository:
    """
    Directory of MVL1 files with a JSON index

    The index keeps per-volume metadata that is not part of the file format:
    dataset split and whether the mask may be used as a training annotation.
    """

    INDEX_NAME = "index.json"
    SUFFIX = ".mvl"

    def __init__(self, root: Path):
        self.root = Path(root)

    def _index_path(self) -> Path:
        return self.root / self.INDEX_NAME

    def read_index(self) -> dict[str, dict]:
        if not self._index_path().exists():
            return {}
        return json.loads(self._index_path().read_text())

    def save(self, volumes: list[Volume], metadata: dict[str, dict] | None = None) -> list[Path]:
        """
        Write volumes and merge their metadata into the index

        Returns:
            Written file paths
        """
        self.root.mkdir(parents=True, exist_ok=True)
        index = self.read_index()
        paths = []
        for v in volumes:
            path = self.root / f"{v.volume_id}{self.SUFFIX}"
            save_volume(v, path)
            index[v.volume_id] = {
                "modality": v.modality.value,
                "ap_label": v.ap_label.value,
                **(metadata or {}).get(v.volume_id, {}),
            }
            paths.append(path)
        self._index_path().write_text(json.dumps(index, indent=2, sort_keys=True))
        logger.info(f"💾 Saved {len(volumes)} volumes to {self.root}")
        return paths

    def load(self, volume_id: str) -> Volume:
        return load_volume(self.root / f"{volume_id}{self.SUFFIX}")

    def load_all(self, **filters) -> list[Volume]:
        """
        Load volumes whose index entries match every filter (e.g. split="train")
        """
        index = self.read_index()
        ids = sorted(
            vid for vid, meta in index.items()
            if all(meta.get(key) == value for key, value in filters.items())
        )
        return [self.load(vid) for vid in ids]

    def load_splits(self, *splits: str) -> tuple[list[Volume], set[str]]:
        """
        Volumes in any of `splits` (all indexed volumes when none are given)

        Returns:
            The volumes and the ids whose masks count as training annotations
        """
        index = self.read_index()
        ids = sorted(vid for vid, meta in index.items() if not splits or meta.get("split") in splits)
        annotated = {vid for vid in ids if index[vid].get("annotated")}
        return [self.load(vid) for vid in ids], annotated

    def exists(self) -> bool:
        return self._index_path().exists()
