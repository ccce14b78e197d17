"""Pivot vs. expert-prototype comparison on embeddings and on raw images."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import DataError, euclidean_distance

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 255.0
COMPARE_SIZE = (300, 300)

MEASURES = ("euclidean", "ssim")


@dataclass(frozen=True)
class RasterImage:
    """8-bit image stored as an ``h x w x channels`` array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise DataError(f"expected an h x w x {{1,3}} image, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DataError("image has a zero dimension")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255) or not np.all(np.equal(np.mod(px, 1), 0)):
                raise DataError("pixel values must be integers in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def gray(self) -> np.ndarray:
        """2-D view of a single-channel image."""
        if self.channels != 1:
            raise DataError("image is not single-channel")
        return self.pixels[:, :, 0]


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres: output i samples input coordinate (i + 0.5) * scale - 0.5
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img: RasterImage, out_h: int, out_w: int) -> RasterImage:
    if out_h < 1 or out_w < 1:
        raise DataError(f"output size must be positive, got {out_h}x{out_w}")
    px = img.pixels.astype(np.float64)
    r0, r1, fr = _axis_weights(img.height, out_h)
    c0, c1, fc = _axis_weights(img.width, out_w)
    fr = fr[:, None, None]
    fc = fc[None, :, None]
    top = px[r0][:, c0] * (1.0 - fc) + px[r0][:, c1] * fc
    bottom = px[r1][:, c0] * (1.0 - fc) + px[r1][:, c1] * fc
    return RasterImage(_round_half_up(top * (1.0 - fr) + bottom * fr))


def to_grayscale(img: RasterImage) -> RasterImage:
    """ITU-R 601 luma, rounded half up."""
    if img.channels == 1:
        return img
    if img.channels != 3:
        raise DataError(f"unsupported channel count {img.channels}")
    px = img.pixels.astype(np.float64)
    luma = 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]
    return RasterImage(_round_half_up(luma))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def _filter_valid(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    rows = sliding_window_view(a, g.size, axis=1) @ g
    return sliding_window_view(rows, g.size, axis=0) @ g


def ssim(a: RasterImage, b: RasterImage) -> float:
    """Mean structural similarity over all fully-covered 11x11 Gaussian windows."""
    if a.channels != 1 or b.channels != 1:
        raise DataError("ssim expects single-channel images; convert with to_grayscale first")
    if (a.height, a.width) != (b.height, b.width):
        raise DataError(f"dimension mismatch: {a.height}x{a.width} vs {b.height}x{b.width}")
    if min(a.height, a.width) < SSIM_WINDOW:
        raise DataError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    x = a.gray.astype(np.float64)
    y = b.gray.astype(np.float64)
    g = _gaussian_window()
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    var_x = _filter_valid(x * x, g) - mu_x * mu_x
    var_y = _filter_valid(y * y, g) - mu_y * mu_y
    cov = _filter_valid(x * y, g) - mu_x * mu_y
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


# -- heatmaps -------------------------------------------------------------------

@dataclass(frozen=True)
class PrototypeRecord:
    id: str
    label: int
    embedding: Optional[np.ndarray] = None
    image: Optional[RasterImage] = None


@dataclass(frozen=True)
class PrototypeSet:
    records: tuple
    class_names: Optional[tuple] = None

    def __post_init__(self):
        records = tuple(self.records)
        ids = [r.id for r in records]
        if len(set(ids)) != len(ids):
            raise DataError("prototype ids must be unique")
        dims = {np.asarray(r.embedding).size for r in records if r.embedding is not None}
        if len(dims) > 1:
            raise DataError(f"prototype embeddings have differing dimensionality: {sorted(dims)}")
        object.__setattr__(self, "records", records)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def display_label(record_id: str, label: int, class_names: Optional[Sequence[str]] = None) -> str:
    """``"n:p252"`` style label: class initial, then the record id."""
    name = class_names[label] if class_names and label < len(class_names) else str(label)
    return f"{name[:1].lower()}:{record_id}"


@dataclass(frozen=True)
class ComparisonMatrix:
    row_ids: tuple
    row_labels: tuple
    col_ids: tuple
    col_labels: tuple
    values: np.ndarray
    measure: str
    class_names: Optional[tuple] = None

    def row_names(self):
        return [display_label(i, c, self.class_names) for i, c in zip(self.row_ids, self.row_labels)]

    def col_names(self):
        return [display_label(i, c, self.class_names) for i, c in zip(self.col_ids, self.col_labels)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.measure] + self.col_names())
        for name, row in zip(self.row_names(), self.values):
            w.writerow([name] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def to_svg(self, cell: int = 28) -> str:
        """Grayscale heatmap; darker cells mean more similar."""
        v = np.asarray(self.values, dtype=np.float64)
        lo, hi = float(v.min()), float(v.max())
        t = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
        if self.measure == "ssim":
            t = 1.0 - t
        rows, cols = self.row_names(), self.col_names()
        margin = 8 * max(len(s) for s in rows + cols) + 10
        w = margin + cell * len(cols) + 10
        h = margin + cell * len(rows) + 10
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="monospace" font-size="11">']
        for j, name in enumerate(cols):
            x = margin + j * cell + cell // 2
            out.append(f'<text x="{x}" y="{margin - 4}" transform="rotate(-90 {x} {margin - 4})">{_xml(name)}</text>')
        for i, name in enumerate(rows):
            y = margin + i * cell
            out.append(f'<text x="4" y="{y + cell // 2 + 4}">{_xml(name)}</text>')
            for j in range(len(cols)):
                g = int(round(255 * t[i, j]))
                out.append(f'<rect x="{margin + j * cell}" y="{y}" width="{cell}" height="{cell}" '
                           f'fill="rgb({g},{g},{g})"><title>{v[i, j]:.4g}</title></rect>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _xml(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def prepare_for_ssim(img: RasterImage, size=COMPARE_SIZE) -> RasterImage:
    return to_grayscale(resize_bilinear(img, size[0], size[1]))


def comparison_heatmap(pivots: Sequence[PrototypeRecord], prototypes: Sequence[PrototypeRecord],
                       measure: str = "euclidean", class_names: Optional[Sequence[str]] = None,
                       size=COMPARE_SIZE) -> ComparisonMatrix:
    """``values[i][j]`` compares pivot ``i`` with prototype ``j``.

    ``euclidean`` uses the embeddings; ``ssim`` uses the images, each resized
    to ``size`` and converted to grayscale first.
    """
    if measure not in MEASURES:
        raise DataError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    if class_names is None and isinstance(prototypes, PrototypeSet):
        class_names = prototypes.class_names
    pivots, prototypes = list(pivots), list(prototypes)
    values = np.zeros((len(pivots), len(prototypes)), dtype=np.float64)
    if measure == "euclidean":
        for r in pivots + prototypes:
            if r.embedding is None:
                raise DataError(f"record {r.id} has no embedding")
        for i, p in enumerate(pivots):
            for j, o in enumerate(prototypes):
                values[i, j] = euclidean_distance(p.embedding, o.embedding)
    else:
        for r in pivots + prototypes:
            if r.image is None:
                raise DataError(f"record {r.id} has no image")
        pv = [prepare_for_ssim(p.image, size) for p in pivots]
        ov = [prepare_for_ssim(o.image, size) for o in prototypes]
        for i, p in enumerate(pv):
            for j, o in enumerate(ov):
                values[i, j] = ssim(p, o)
    return ComparisonMatrix(tuple(r.id for r in pivots), tuple(int(r.label) for r in pivots),
                            tuple(r.id for r in prototypes), tuple(int(r.label) for r in prototypes),
                            values, measure, tuple(class_names) if class_names else None)


@dataclass(frozen=True)
class PairSummary:
    per_class: dict
    mean: float
    std: float
    n_pairs: int


def class_pair_summary(matrix, row_labels=None, col_labels=None) -> PairSummary:
    """Per-class and overall mean (population std) of pair values.

    With a :class:`ComparisonMatrix`, or when ``col_labels`` is given, every
    cell is a (row, column) pair and a class mean covers cells whose row and
    column share that class. Otherwise ``matrix`` is a square pairwise matrix
    over one set; only distinct unordered pairs ``i < j`` count.
    """
    if isinstance(matrix, ComparisonMatrix):
        row_labels, col_labels = matrix.row_labels, matrix.col_labels
        matrix = matrix.values
    M = np.asarray(matrix, dtype=np.float64)
    if row_labels is None:
        raise DataError("row labels are required")
    rl = np.asarray(row_labels)
    if M.ndim != 2 or rl.size != M.shape[0]:
        raise DataError(f"{rl.size} row labels for a matrix with {M.shape[0]} rows")
    if col_labels is None:
        if M.shape[0] != M.shape[1]:
            raise DataError("pairwise mode needs a square matrix; pass col_labels for rectangular ones")
        iu, ju = np.triu_indices(M.shape[0], k=1)
        pair_rows, pair_cols, vals = rl[iu], rl[ju], M[iu, ju]
    else:
        cl = np.asarray(col_labels)
        if cl.size != M.shape[1]:
            raise DataError(f"{cl.size} column labels for a matrix with {M.shape[1]} columns")
        pair_rows = np.repeat(rl, M.shape[1])
        pair_cols = np.tile(cl, M.shape[0])
        vals = M.ravel()
    if vals.size == 0:
        raise DataError("no pairs to summarize")
    per_class = {}
    for c in sorted(set(rl.tolist())):
        same = (pair_rows == c) & (pair_cols == c)
        if same.any():
            per_class[c] = float(vals[same].mean())
    return PairSummary(per_class, float(vals.mean()), float(math.sqrt(np.mean((vals - vals.mean()) ** 2))),
                       int(vals.size))
