"""CSV datasets, prototype tables, images and JSON model files."""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import DataError, DistanceMetric, LabeledDataset
from .imaging import PrototypeRecord, PrototypeSet, RasterImage
from .tree import Hyperparams, Internal, Leaf, PivotRecord, PivotTreeModel, Role, iter_nodes

FORMAT_NAME = "pivottree-model"
FORMAT_VERSION = 1
MODEL_SUFFIX = ".pvt.json"


class ModelFormatError(DataError):
    """Raised for unreadable, truncated or incompatible model files."""


# -- datasets -------------------------------------------------------------------

def read_class_map(path) -> tuple:
    """Class names from a JSON sidecar: a list of names, or ``{name: id}``."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        ids = sorted(raw.values())
        if ids != list(range(len(ids))):
            raise DataError(f"{path}: class ids must be contiguous from 0")
        return tuple(name for name, _ in sorted(raw.items(), key=lambda kv: kv[1]))
    if isinstance(raw, list) and all(isinstance(s, str) for s in raw):
        return tuple(raw)
    raise DataError(f"{path}: class map must be a list of names or a name->id object")


def _read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty (a header line is required)") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        rows = []
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {reader.line_num} has {len(row)} fields, expected {len(header)}")
            rows.append((reader.line_num, row))
    return header, rows


def _parse_float(text: str, path, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{path}: line {line}, column {column!r}: non-numeric value {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}: line {line}, column {column!r}: non-finite value {text!r}")
    return value


def _map_labels(raw, class_names, path, lines):
    if class_names is not None:
        index = {name: i for i, name in enumerate(class_names)}
        labels = []
        for text, line in zip(raw, lines):
            if text not in index:
                raise DataError(f"{path}: line {line}: unknown class {text!r}")
            labels.append(index[text])
        return labels, tuple(class_names)
    index = {}
    for text in raw:
        index.setdefault(text, len(index))
    return [index[t] for t in raw], tuple(index)


def read_feature_table(path, label_column: Optional[str] = "label", id_column: Optional[str] = "id",
                       exclude: Sequence[str] = ()):
    """Parse a feature CSV into ``(X, ids, raw_labels, lines, feature_columns)``.

    ``raw_labels`` is ``None`` when the label column is absent.
    """
    header, rows = _read_table(path)
    has_label = label_column is not None and label_column in header
    has_id = id_column is not None and id_column in header
    skip = {c for c in (label_column if has_label else None, id_column if has_id else None) if c}
    skip |= set(exclude)
    feat_cols = [i for i, h in enumerate(header) if h not in skip]
    if not feat_cols:
        raise DataError(f"{path}: no feature columns")
    if not rows:
        raise DataError(f"{path}: no data rows")
    X = np.empty((len(rows), len(feat_cols)), dtype=np.float64)
    for r, (line, row) in enumerate(rows):
        for j, ci in enumerate(feat_cols):
            X[r, j] = _parse_float(row[ci].strip(), path, line, header[ci])
    ids = None
    if has_id:
        ci = header.index(id_column)
        ids = [row[ci].strip() for _, row in rows]
        seen = {}
        for (line, _), i in zip(rows, ids):
            if i in seen:
                raise DataError(f"{path}: line {line}: duplicate id {i!r} (first on line {seen[i]})")
            seen[i] = line
    raw = None
    if has_label:
        ci = header.index(label_column)
        raw = [row[ci].strip() for _, row in rows]
    return X, ids, raw, [line for line, _ in rows], [header[i] for i in feat_cols]


def load_dataset(path, label_column: str = "label", id_column: Optional[str] = "id",
                 class_names: Optional[Sequence[str]] = None, class_map=None) -> LabeledDataset:
    """Load a labeled CSV.

    Class ids follow first appearance in the file unless ``class_names`` (or
    a ``class_map`` JSON sidecar path) fixes the order.
    """
    if class_map is not None:
        class_names = read_class_map(class_map)
    X, ids, raw, lines, _ = read_feature_table(path, label_column, id_column)
    if raw is None:
        raise DataError(f"{path}: missing label column {label_column!r}")
    labels, names = _map_labels(raw, class_names, path, lines)
    return LabeledDataset(X, np.array(labels, dtype=np.intp), ids=ids, class_names=names)


def save_dataset(data: LabeledDataset, path, label_column: str = "label", id_column: str = "id",
                 feature_names: Optional[Sequence[str]] = None) -> None:
    names = list(feature_names) if feature_names else [f"f{j}" for j in range(data.m)]
    class_names = data.class_names or tuple(str(i) for i in range(data.n_classes))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(([id_column] if data.ids is not None else []) + names + [label_column])
        for i in range(data.n):
            lead = [data.ids[i]] if data.ids is not None else []
            w.writerow(lead + [repr(float(v)) for v in data.X[i]] + [class_names[data.y[i]]])


# -- prototypes and images ----------------------------------------------------------

def load_image(path) -> RasterImage:
    """PNG or binary PNM (PGM/PPM) as an 8-bit 1- or 3-channel image."""
    from PIL import Image

    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK", "YCbCr", "LA") else "L")
            return RasterImage(np.array(im, dtype=np.uint8))
    except OSError as exc:
        raise DataError(f"{path}: cannot read image ({exc})") from None


def save_image(img: RasterImage, path) -> None:
    from PIL import Image

    px = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    Image.fromarray(np.ascontiguousarray(px)).save(path)


IMAGE_EXTENSIONS = (".png", ".pgm", ".ppm", ".pnm")


def find_image(directory, record_id: str) -> Optional[Path]:
    for ext in IMAGE_EXTENSIONS:
        candidate = Path(directory) / f"{record_id}{ext}"
        if candidate.exists():
            return candidate
    return None


def load_prototypes(path, label_column: str = "label", id_column: str = "id", image_column: str = "image",
                    class_names: Optional[Sequence[str]] = None, load_images: bool = True) -> PrototypeSet:
    """Prototype table: id, label, optional image path, remaining columns are the embedding.

    Image paths are resolved relative to the CSV file. A table may omit the
    embedding columns entirely when only images are compared.
    """
    header, rows = _read_table(path)
    for col in (id_column, label_column):
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
    id_i, lab_i = header.index(id_column), header.index(label_column)
    img_i = header.index(image_column) if image_column in header else None
    feat = [i for i in range(len(header)) if i not in (id_i, lab_i, img_i)]
    raw = [row[lab_i].strip() for _, row in rows]
    labels, names = _map_labels(raw, class_names, path, [line for line, _ in rows])
    base = Path(path).parent
    records = []
    for (line, row), label in zip(rows, labels):
        emb = np.array([_parse_float(row[i].strip(), path, line, header[i]) for i in feat]) if feat else None
        image = None
        if img_i is not None and row[img_i].strip() and load_images:
            image = load_image(base / row[img_i].strip())
        records.append(PrototypeRecord(row[id_i].strip(), label, emb, image))
    return PrototypeSet(tuple(records), names)


# -- models ---------------------------------------------------------------------------

def _node_to_dict(node) -> dict:
    if node.is_leaf:
        return {"leaf": True, "class": node.predicted_class, "counts": list(node.class_counts), "depth": node.depth}
    return {"leaf": False, "pivot": node.pivot.source_index, "threshold": float(node.threshold),
            "counts": list(node.class_counts), "depth": node.depth,
            "left": _node_to_dict(node.left), "right": _node_to_dict(node.right)}


def model_to_dict(model: PivotTreeModel, meta: Optional[dict] = None) -> dict:
    hp = model.hyperparams
    doc = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "metric": model.metric.value,
        "hyperparams": {
            "max_depth": hp.max_depth,
            "min_samples_split": hp.min_samples_split,
            "min_samples_leaf": hp.min_samples_leaf,
            "impurity": hp.impurity,
            "candidate_types": sorted(r.value for r in hp.candidate_types),
            "max_candidates_per_class": hp.max_candidates_per_class,
        },
        "n_train": model.n_train,
        "m": model.m,
        "c": model.c,
        "class_names": list(model.class_names) if model.class_names else None,
        "pivots": [
            {
                "source_index": p.source_index,
                "id": p.instance_id,
                "label": p.label,
                "roles": sorted(r.value for r in p.roles),
                "node_depth": p.node_depth,
                "vector": [float(v) for v in p.vector],
            }
            for p in model.all_pivots
        ],
        "tree": _node_to_dict(model.root),
    }
    if meta:
        doc["meta"] = dict(meta)
    return doc


def dumps_model(model: PivotTreeModel, meta: Optional[dict] = None) -> str:
    # json renders floats with repr(), the shortest string that round-trips exactly
    return json.dumps(model_to_dict(model, meta), indent=1, ensure_ascii=False) + "\n"


def save_model(model: PivotTreeModel, path, meta: Optional[dict] = None) -> None:
    text = dumps_model(model, meta)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def model_from_dict(doc: dict) -> PivotTreeModel:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ModelFormatError("not a pivottree model document")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format_version {version!r} (expected {FORMAT_VERSION})")
    try:
        h = doc["hyperparams"]
        hp = Hyperparams(max_depth=int(h["max_depth"]), min_samples_split=int(h["min_samples_split"]),
                         min_samples_leaf=int(h["min_samples_leaf"]), impurity=h["impurity"],
                         candidate_types=frozenset(Role(r) for r in h["candidate_types"]),
                         max_candidates_per_class=h.get("max_candidates_per_class"))
        m, c = int(doc["m"]), int(doc["c"])
        class_names = tuple(doc["class_names"]) if doc.get("class_names") else None
        pivots = {}
        for p in doc["pivots"]:
            vec = np.array(p["vector"], dtype=np.float64)
            if vec.shape != (m,):
                raise ModelFormatError(f"pivot {p['source_index']} has {vec.size} values, expected {m}")
            roles = frozenset(Role(r) for r in p["roles"])
            if not roles:
                raise ModelFormatError(f"pivot {p['source_index']} has no roles")
            rec = PivotRecord(int(p["source_index"]), vec, int(p["label"]), roles, int(p["node_depth"]),
                              p.get("id"))
            pivots[rec.source_index] = rec

        def build(d):
            counts = tuple(int(v) for v in d["counts"])
            if len(counts) != c:
                raise ModelFormatError("node class counts do not match the class count")
            if d["leaf"]:
                return Leaf(int(d["class"]), counts, int(d["depth"]))
            pivot = pivots.get(int(d["pivot"]))
            if pivot is None:
                raise ModelFormatError(f"node references unknown pivot {d['pivot']}")
            return Internal(pivot, float(d["threshold"]), build(d["left"]), build(d["right"]), counts,
                            int(d["depth"]))

        root = build(doc["tree"])
        model = PivotTreeModel(root=root, all_pivots=[pivots[k] for k in sorted(pivots)], hyperparams=hp,
                               metric=DistanceMetric.parse(doc["metric"]), n_train=int(doc["n_train"]),
                               m=m, c=c, class_names=class_names)
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ModelFormatError(f"corrupted model structure: {exc}") from None
    for node in iter_nodes(model.root):
        if node.is_leaf and not 0 <= node.predicted_class < c:
            raise ModelFormatError("leaf class out of range")
    return model


def loads_model(text: str) -> PivotTreeModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON (truncated?): {exc}") from None
    return model_from_dict(doc)


def load_model(path) -> PivotTreeModel:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"{path}: cannot read model ({exc.strerror})") from None
    return loads_model(text)
