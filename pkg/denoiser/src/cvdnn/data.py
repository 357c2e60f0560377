"""Reading exported (noisy, clean) sample-pair datasets.

A dataset directory is the workbench export format: manifest.json plus
chunk_NNNN.noisy.bin / chunk_NNNN.clean.bin tensor containers, each
holding an (n, rows, cols) complex64 stack.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .container import read_complex_tensor
from .errors import ContainerFormatError

_MANIFEST_KEYS = ("version", "kind", "count", "chunk_size", "grid_rows",
                  "k_subcarriers")


def read_manifest(directory) -> dict:
    directory = Path(directory)
    path = directory / "manifest.json"
    if not path.exists():
        raise ContainerFormatError(f"manifest: {path} not found")
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in _MANIFEST_KEYS:
        if key not in manifest:
            raise ContainerFormatError(f"manifest: missing key {key!r}")
    if manifest["version"] != 1:
        raise ContainerFormatError(
            f"version: unsupported manifest version {manifest['version']}")
    if manifest["kind"] != "sample-pairs":
        raise ContainerFormatError(
            f"kind: expected 'sample-pairs', found {manifest['kind']!r}")
    return manifest


def iter_chunks(directory, limit: int | None = None):
    """Yield (noisy, clean) chunk stacks, stopping after `limit` samples."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    count = manifest["count"] if limit is None else min(limit, manifest["count"])
    size = manifest["chunk_size"]
    shape = (manifest["grid_rows"], manifest["k_subcarriers"])
    done = 0
    for index in range((count + size - 1) // size):
        noisy, _ = read_complex_tensor(directory / f"chunk_{index:04d}.noisy.bin")
        clean, _ = read_complex_tensor(directory / f"chunk_{index:04d}.clean.bin")
        if noisy.shape != clean.shape or noisy.shape[1:] != shape:
            raise ContainerFormatError(
                f"chunk {index}: shapes {noisy.shape} / {clean.shape} do not "
                f"match manifest sample shape {shape}")
        take = min(noisy.shape[0], count - done)
        yield noisy[:take], clean[:take]
        done += take
        if done >= count:
            return


def load_pairs(directory, limit: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Load a dataset into memory as two (n, rows, cols) complex arrays."""
    noisy_parts, clean_parts = [], []
    for noisy, clean in iter_chunks(directory, limit):
        noisy_parts.append(noisy)
        clean_parts.append(clean)
    if not noisy_parts:
        raise ContainerFormatError("dataset contains no samples")
    return np.concatenate(noisy_parts), np.concatenate(clean_parts)


def split_indices(count: int, val_fraction: float,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Shuffled train/validation index split; validation may be empty."""
    order = rng.permutation(count)
    n_val = int(round(count * val_fraction))
    if val_fraction > 0 and count > 1:
        n_val = min(max(n_val, 1), count - 1)
    else:
        n_val = 0
    return order[n_val:], order[:n_val]


def crop_patches(noisy: np.ndarray, clean: np.ndarray, indices: np.ndarray,
                 patch: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Aligned random crops from the selected samples.

    The crop never exceeds the matrix, so small matrices pass through
    whole along that axis.
    """
    rows, cols = noisy.shape[1:]
    ph, pw = min(patch, rows), min(patch, cols)
    out_n = np.empty((len(indices), ph, pw), dtype=noisy.dtype)
    out_c = np.empty_like(out_n)
    tops = rng.integers(0, rows - ph + 1, size=len(indices))
    lefts = rng.integers(0, cols - pw + 1, size=len(indices))
    for j, (i, top, left) in enumerate(zip(indices, tops, lefts)):
        out_n[j] = noisy[i, top:top + ph, left:left + pw]
        out_c[j] = clean[i, top:top + ph, left:left + pw]
    return out_n, out_c
