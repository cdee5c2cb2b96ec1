"""Grayscale image I/O, dataset manifests, and reproducible stratified splits.

Images travel as NetPBM PGM files (P2 ASCII or P5 binary), the simplest
container that round-trips 8- and 16-bit grayscale exactly.  16-bit P5
samples are big-endian, per the NetPBM convention.  Manifests are UTF-8
text with one ``path,label`` record per line and no header.  Splitting is
stratified by class and fully determined by ``(manifest, seed)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .rng import make_rng


class PgmError(ValueError):
    """Malformed or unsupported NetPBM file."""


class ManifestError(ValueError):
    """Malformed manifest line or label."""


@dataclass(eq=False)
class GrayImage:
    """Grayscale raster; ``pixels`` is an int32 array of shape (height, width)."""

    width: int
    height: int
    max_value: int
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.int32)
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if not 1 <= self.max_value <= 65535:
            raise ValueError("max_value must be in [1, 65535]")
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixel grid shape {self.pixels.shape} does not match "
                f"(height, width)=({self.height}, {self.width})"
            )
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() > self.max_value):
            raise ValueError("pixel values outside [0, max_value]")

    @classmethod
    def from_array(cls, arr, max_value: int = 255) -> "GrayImage":
        arr = np.asarray(arr, dtype=np.int32)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array")
        h, w = arr.shape
        return cls(width=w, height=h, max_value=max_value, pixels=arr)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int


@dataclass
class DatasetSplit:
    train: list
    validation: list
    test: list
    seed: int


# --------------------------------------------------------------------------
# PGM reading / writing


def _strip_comments(data: bytes) -> bytes:
    out = []
    for line in data.split(b"\n"):
        hash_at = line.find(b"#")
        out.append(line if hash_at < 0 else line[:hash_at])
    return b"\n".join(out)


def _read_p5_header(data: bytes):
    """Parse width/height/maxval after a P5 magic; return them plus the payload offset."""
    tokens = []
    i = 2
    n = len(data)
    while len(tokens) < 3:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
            j += 1
        if j == i:
            raise PgmError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    # exactly one whitespace byte separates the header from the payload
    if i >= n or not data[i : i + 1].isspace():
        raise PgmError("missing separator before PGM payload")
    i += 1
    try:
        width, height, max_value = (int(t) for t in tokens)
    except ValueError as exc:
        raise PgmError(f"non-numeric PGM header field: {exc}") from None
    return width, height, max_value, i


def load_image(path) -> GrayImage:
    """Read a P2 (ASCII) or P5 (binary) grayscale PGM file."""
    with open(path, "rb") as f:
        data = f.read()
    magic = data[:2]
    if magic == b"P2":
        tokens = _strip_comments(data[2:]).split()
        if len(tokens) < 3:
            raise PgmError(f"{path}: truncated PGM header")
        try:
            width, height, max_value = (int(t) for t in tokens[:3])
            values = [int(t) for t in tokens[3:]]
        except ValueError as exc:
            raise PgmError(f"{path}: non-numeric token: {exc}") from None
        _check_header(path, width, height, max_value)
        if len(values) != width * height:
            raise PgmError(
                f"{path}: expected {width * height} pixel values, found {len(values)}"
            )
        pixels = np.array(values, dtype=np.int32).reshape(height, width)
    elif magic == b"P5":
        width, height, max_value, offset = _read_p5_header(data)
        _check_header(path, width, height, max_value)
        bps = 1 if max_value < 256 else 2
        payload = data[offset:]
        expected = width * height * bps
        if len(payload) != expected:
            raise PgmError(
                f"{path}: payload is {len(payload)} bytes, expected {expected}"
            )
        dtype = np.uint8 if bps == 1 else np.dtype(">u2")
        pixels = np.frombuffer(payload, dtype=dtype).astype(np.int32).reshape(height, width)
    else:
        raise PgmError(f"{path}: bad magic number {magic!r} (want P2 or P5)")
    if pixels.size and pixels.max() > max_value:
        raise PgmError(f"{path}: pixel value {pixels.max()} exceeds max_value {max_value}")
    return GrayImage(width=width, height=height, max_value=max_value, pixels=pixels)


def _check_header(path, width, height, max_value):
    if width < 1 or height < 1:
        raise PgmError(f"{path}: non-positive dimensions {width}x{height}")
    if not 1 <= max_value <= 65535:
        raise PgmError(f"{path}: max_value {max_value} outside [1, 65535]")


def save_image(img: GrayImage, path, fmt: str = "P5") -> None:
    """Write ``img`` as P5 (binary, the default) or P2 (ASCII)."""
    if fmt not in ("P2", "P5"):
        raise ValueError(f"fmt must be 'P2' or 'P5', got {fmt!r}")
    header = f"{fmt}\n{img.width} {img.height}\n{img.max_value}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        if fmt == "P5":
            dtype = np.uint8 if img.max_value < 256 else np.dtype(">u2")
            f.write(img.pixels.astype(dtype).tobytes())
        else:
            lines = [" ".join(str(v) for v in row) for row in img.pixels]
            f.write(("\n".join(lines) + "\n").encode("ascii"))


# --------------------------------------------------------------------------
# Manifests


def load_manifest(path) -> list:
    """Parse ``path,label`` lines; empty lines are skipped, order is preserved."""
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            rel, sep, lab = line.rpartition(",")
            if not sep or not rel:
                raise ManifestError(f"{path}:{lineno}: expected 'path,label', got {line!r}")
            try:
                label = int(lab)
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: non-integer label {lab!r}") from None
            if label not in (0, 1):
                raise ManifestError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
            entries.append(ManifestEntry(path=rel, label=label))
    return entries


def save_manifest(entries, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(f"{e.path},{e.label}\n")


# --------------------------------------------------------------------------
# Splitting


def _apportion(class_sizes, subset_sizes):
    """Round the proportional class-by-subset allocation table to integers.

    Every cell lands on the floor or ceiling of its exact quota
    ``class_size * subset_size / N`` while row sums (class sizes) and column
    sums (subset sizes) hold exactly.  Quotas are exact rationals; the
    floor-or-ceil choice is a tiny max-flow (controlled rounding), so the
    per-class deviation from exact proportionality never exceeds one item.
    """
    total = sum(class_sizes)
    if sum(subset_sizes) != total:
        raise ValueError("subset sizes must sum to the total")
    k, m = len(class_sizes), len(subset_sizes)
    quotas = [[Fraction(class_sizes[c] * subset_sizes[j], total) for j in range(m)] for c in range(k)]
    base = [[int(q) for q in row] for row in quotas]
    row_need = [class_sizes[c] - sum(base[c]) for c in range(k)]
    col_need = [subset_sizes[j] - sum(base[c][j] for c in range(k)) for j in range(m)]

    # Max-flow on source -> class (cap row_need) -> subset (cap 1 per
    # fractional cell) -> sink (cap col_need).  A feasible fractional flow
    # always exists, so the integral max flow saturates the source.
    src, snk = k + m, k + m + 1
    cap = {}
    for c in range(k):
        cap[(src, c)] = row_need[c]
        for j in range(m):
            if quotas[c][j] != base[c][j]:
                cap[(c, k + j)] = 1
    for j in range(m):
        cap[(k + j, snk)] = col_need[j]

    def bfs_path():
        prev = {src: None}
        queue = [src]
        while queue:
            u = queue.pop(0)
            if u == snk:
                break
            for (a, b), capacity in cap.items():
                if a == u and capacity > 0 and b not in prev:
                    prev[b] = u
                    queue.append(b)
        if snk not in prev:
            return None
        node, path = snk, []
        while prev[node] is not None:
            path.append((prev[node], node))
            node = prev[node]
        return path

    pushed = 0
    need = sum(row_need)
    while pushed < need:
        path = bfs_path()
        if path is None:
            raise RuntimeError("apportionment flow infeasible")  # cannot happen
        for edge in path:
            cap[edge] -= 1
            back = (edge[1], edge[0])
            cap[back] = cap.get(back, 0) + 1
        pushed += 1

    for c in range(k):
        for j in range(m):
            if (c, k + j) in cap and cap.get((k + j, c), 0) > 0:
                base[c][j] += 1
    return base


def split_dataset(entries, seed: int) -> DatasetSplit:
    """Stratified train/validation/test split, deterministic for a fixed seed.

    Sizes: ``test = floor(0.2 * N)``, ``validation = floor(0.2 * (N - test))``,
    the remainder is train.  Per-class counts in every subset stay within one
    item of exact proportionality.
    """
    n = len(entries)
    if n < 5:
        raise ValueError(f"need at least 5 entries to split, got {n}")
    n_test = n // 5
    n_val = (n - n_test) // 5
    n_train = n - n_test - n_val

    by_class = {0: [], 1: []}
    for idx, e in enumerate(entries):
        by_class[e.label].append(idx)
    for label in (0, 1):
        if not by_class[label]:
            raise ValueError(f"stratified split requires both classes; class {label} is empty")

    counts = _apportion(
        [len(by_class[0]), len(by_class[1])], [n_train, n_val, n_test]
    )

    rng = make_rng(seed, "split")
    train, val, test = [], [], []
    for ci, label in enumerate((0, 1)):
        pool = by_class[label]
        order = rng.permutation(len(pool))
        shuffled = [pool[i] for i in order]
        t, v = counts[ci][0], counts[ci][1]
        train.extend(shuffled[:t])
        val.extend(shuffled[t : t + v])
        test.extend(shuffled[t + v :])
    # final shuffle so subsets are not grouped by class
    out = []
    for subset in (train, val, test):
        order = rng.permutation(len(subset))
        out.append([entries[subset[i]] for i in order])
    return DatasetSplit(train=out[0], validation=out[1], test=out[2], seed=seed)


def save_split(split: DatasetSplit, dirpath) -> None:
    """Write the three subset manifests plus a sidecar with the seed and counts."""
    os.makedirs(dirpath, exist_ok=True)
    for name, subset in (
        ("train", split.train),
        ("validation", split.validation),
        ("test", split.test),
    ):
        save_manifest(subset, os.path.join(dirpath, f"{name}.csv"))
    lines = [f"seed={split.seed}"]
    total = len(split.train) + len(split.validation) + len(split.test)
    lines.append(f"total={total}")
    for name, subset in (
        ("train", split.train),
        ("validation", split.validation),
        ("test", split.test),
    ):
        neg = sum(1 for e in subset if e.label == 0)
        pos = len(subset) - neg
        lines.append(f"{name}={len(subset)} negatives={neg} positives={pos}")
    with open(os.path.join(dirpath, "split_info.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_split(dirpath) -> DatasetSplit:
    subsets = {}
    for name in ("train", "validation", "test"):
        path = os.path.join(dirpath, f"{name}.csv")
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing split manifest {path}")
        subsets[name] = load_manifest(path)
    seed = 0
    info = os.path.join(dirpath, "split_info.txt")
    if os.path.exists(info):
        with open(info, "r", encoding="utf-8") as f:
            for line in f:
                if line.startswith("seed="):
                    seed = int(line.strip().split("=", 1)[1])
                    break
    return DatasetSplit(
        train=subsets["train"], validation=subsets["validation"],
        test=subsets["test"], seed=seed,
    )
