"""Canonical on-disk dataset format, splits, and converters for public dumps.

A dataset directory holds::

    manifest.json   name, n_nodes, n_features, n_classes, files, optional homophily
    edges.tsv       one "u<TAB>v[<TAB>w]" line per edge, 0-indexed
    features.csv    N rows of M comma-separated floats, no header
    labels.csv      N lines, one integer class each
    splits.json     {"train": [...], "val": [...], "test": [...]} node indices

See ``docs/dataset_format.md`` for the byte-level description.
"""

from __future__ import annotations

import json
import math
import os
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import Graph, edge_homophily, random_masks, symmetrize
from .io import atomic_write_text
from .linalg import ContractError, DTYPE

DEFAULT_FILES = {
    "edges": "edges.tsv",
    "features": "features.csv",
    "labels": "labels.csv",
    "splits": "splits.json",
}
HOMOPHILY_TOL = 0.02


class DatasetError(Exception):
    """Base class for dataset ingestion failures; messages carry a location."""


class DatasetNotFoundError(DatasetError):
    pass


class MissingFileError(DatasetError):
    pass


class MalformedRowError(DatasetError):
    pass


class IndexRangeError(DatasetError):
    pass


class DuplicateEdgeError(DatasetError):
    pass


class MaskOverlapError(DatasetError):
    pass


class SizeMismatchError(DatasetError):
    pass


class HomophilyMismatchError(DatasetError):
    pass


@dataclass
class DatasetManifest:
    name: str
    n_nodes: int
    n_features: int
    n_classes: int
    files: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_FILES))
    homophily: float | None = None

    @classmethod
    def read(cls, path: Path) -> "DatasetManifest":
        try:
            raw = json.loads(_read_text(path))
        except json.JSONDecodeError as exc:
            raise MalformedRowError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(raw, dict):
            raise MalformedRowError(f"{path}: manifest must be a JSON object")
        try:
            files = dict(DEFAULT_FILES)
            files.update(raw.get("files", {}))
            man = cls(
                name=str(raw["name"]),
                n_nodes=int(raw["n_nodes"]),
                n_features=int(raw["n_features"]),
                n_classes=int(raw["n_classes"]),
                files=files,
                homophily=None if raw.get("homophily") is None else float(raw["homophily"]),
            )
            if man.n_nodes < 0 or man.n_features < 1 or man.n_classes < 1:
                raise ValueError("sizes must be positive")
            if not all(isinstance(v, str) for v in files.values()):
                raise ValueError("file names must be strings")
            return man
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRowError(f"{path}: bad manifest field ({exc})") from None

    def to_json(self) -> str:
        out = {
            "name": self.name,
            "n_nodes": self.n_nodes,
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "files": self.files,
        }
        if self.homophily is not None:
            out["homophily"] = self.homophily
        return json.dumps(out, indent=2, sort_keys=True) + "\n"


def _read_text(path: Path) -> str:
    if not path.is_file():
        raise MissingFileError(f"missing file: {path}")
    try:
        return path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedRowError(f"{path}: byte {exc.start} is not valid UTF-8") from None


def _lines(path: Path) -> list[str]:
    text = _read_text(path)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _read_edges(path: Path, n: int) -> sp.csr_matrix:
    rows, cols, weights = [], [], []
    seen: dict[tuple[int, int], int] = {}
    for lineno, line in enumerate(_lines(path), start=1):
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise MalformedRowError(f"{path}:{lineno}: expected 'u<TAB>v[<TAB>w]', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise MalformedRowError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
        if not (0 <= u < n and 0 <= v < n):
            raise IndexRangeError(f"{path}:{lineno}: node index outside 0..{n - 1} in {line!r}")
        if not math.isfinite(w) or w <= 0:
            raise MalformedRowError(f"{path}:{lineno}: edge weight must be finite and positive, got {w}")
        if (u, v) in seen:
            raise DuplicateEdgeError(f"{path}:{lineno}: duplicate edge ({u}, {v}), first seen on line {seen[u, v]}")
        seen[u, v] = lineno
        if u == v:
            continue
        rows.append(u)
        cols.append(v)
        weights.append(w)
    a = sp.coo_matrix((np.asarray(weights, dtype=DTYPE), (rows, cols)), shape=(n, n))
    return symmetrize(a)


def _read_features(path: Path, n: int, m: int) -> np.ndarray:
    lines = _lines(path)
    if len(lines) != n:
        raise SizeMismatchError(f"{path}: {len(lines)} feature rows, manifest declares {n} nodes")
    out = np.empty((n, m), dtype=DTYPE)
    for lineno, line in enumerate(lines, start=1):
        parts = line.split(",")
        if len(parts) != m:
            raise MalformedRowError(f"{path}:{lineno}: {len(parts)} columns, expected {m}")
        try:
            out[lineno - 1] = [float(p) for p in parts]
        except ValueError:
            raise MalformedRowError(f"{path}:{lineno}: non-numeric feature value") from None
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out).all(axis=1))[0]) + 1
        raise MalformedRowError(f"{path}:{bad}: non-finite feature value")
    return out


def _read_labels(path: Path, n: int, n_classes: int) -> np.ndarray:
    lines = _lines(path)
    if len(lines) != n:
        raise SizeMismatchError(f"{path}: {len(lines)} labels, manifest declares {n} nodes")
    out = np.empty(n, dtype=np.int64)
    for lineno, line in enumerate(lines, start=1):
        try:
            out[lineno - 1] = int(line)
        except ValueError:
            raise MalformedRowError(f"{path}:{lineno}: label {line!r} is not an integer") from None
        if not 0 <= out[lineno - 1] < n_classes:
            raise IndexRangeError(f"{path}:{lineno}: label {line} outside 0..{n_classes - 1}")
    return out


def _read_splits(path: Path, n: int):
    try:
        raw = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise MalformedRowError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise MalformedRowError(f"{path}: splits must be a JSON object")
    masks = {}
    owner = np.full(n, "", dtype=object)
    for key in ("train", "val", "test"):
        if key not in raw or not isinstance(raw[key], list):
            raise MalformedRowError(f"{path}: missing index list {key!r}")
        m = np.zeros(n, dtype=bool)
        for pos, i in enumerate(raw[key]):
            if not isinstance(i, int) or isinstance(i, bool):
                raise MalformedRowError(f"{path}: {key}[{pos}] = {i!r} is not an integer")
            if not 0 <= i < n:
                raise IndexRangeError(f"{path}: {key}[{pos}] = {i} outside 0..{n - 1}")
            if owner[i]:
                raise MaskOverlapError(f"{path}: node {i} appears in both {owner[i]!r} and {key!r}")
            owner[i] = key
            m[i] = True
        masks[key] = m
    return masks["train"], masks["val"], masks["test"]


def load_dataset(directory: str | os.PathLike) -> Graph:
    """Read and validate a dataset directory in the canonical format."""
    root = Path(directory)
    if not root.is_dir():
        raise DatasetNotFoundError(f"dataset not found: {root}")
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingFileError(f"missing file: {manifest_path}")
    man = DatasetManifest.read(manifest_path)
    n = man.n_nodes
    adjacency = _read_edges(root / man.files["edges"], n)
    features = _read_features(root / man.files["features"], n, man.n_features)
    labels = _read_labels(root / man.files["labels"], n, man.n_classes)
    train, val, test = _read_splits(root / man.files["splits"], n)
    try:
        g = Graph(adjacency, features, labels, train, val, test, name=man.name, n_classes=man.n_classes)
    except ContractError as exc:
        raise DatasetError(f"{root}: {exc}") from None
    if man.homophily is not None and g.n_edges:
        h = edge_homophily(g)
        if abs(h - man.homophily) > HOMOPHILY_TOL:
            raise HomophilyMismatchError(
                f"{manifest_path}: declared homophily {man.homophily} but edges give {h:.4f}"
            )
    return g


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips a float64 exactly
    return repr(float(x))


def save_dataset(g: Graph, directory: str | os.PathLike, homophily: float | None = None) -> Path:
    """Write ``g`` in the canonical format; :func:`load_dataset` reads it back bit-exactly."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    upper = sp.triu(g.adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    edge_lines = []
    for i in order:
        u, v, w = int(upper.row[i]), int(upper.col[i]), float(upper.data[i])
        edge_lines.append(f"{u}\t{v}" if w == 1.0 else f"{u}\t{v}\t{_fmt(w)}")
    man = DatasetManifest(g.name, g.n_nodes, g.n_features, g.n_classes, dict(DEFAULT_FILES), homophily)
    atomic_write_text(root / "edges.tsv", "".join(line + "\n" for line in edge_lines))
    atomic_write_text(
        root / "features.csv", "".join(",".join(_fmt(v) for v in row) + "\n" for row in g.features.tolist())
    )
    atomic_write_text(root / "labels.csv", "".join(f"{int(y)}\n" for y in g.labels))
    splits = {
        "train": np.flatnonzero(g.train_mask).tolist(),
        "val": np.flatnonzero(g.val_mask).tolist(),
        "test": np.flatnonzero(g.test_mask).tolist(),
    }
    atomic_write_text(root / "splits.json", json.dumps(splits) + "\n")
    atomic_write_text(root / "manifest.json", man.to_json())
    return root


def make_splits(
    g: Graph,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    per_class_balanced: bool = False,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded disjoint train/val/test masks of sizes ``floor(f * N)``."""
    return random_masks(g.labels, fractions, seed, per_class_balanced)


def resplit(g: Graph, fractions, per_class_balanced: bool, seed: int) -> Graph:
    return g.with_masks(*make_splits(g, fractions, per_class_balanced, seed))


# ---------------------------------------------------------------------------
# converters for public dumps


def _unpickle(path: Path):
    if not path.is_file():
        raise MissingFileError(f"missing file: {path}")
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def convert_planetoid(raw_dir: str | os.PathLike, name: str, out_dir: str | os.PathLike) -> Graph:
    """Convert the ``ind.<name>.*`` Planetoid dump (Cora, Citeseer, Pubmed).

    Uses the standard public split: the first ``len(y)`` nodes for training,
    the next 500 for validation, and ``test.index`` for testing.  Citeseer's
    test indices have gaps (isolated nodes without features); those rows get
    zero features and label 0 and belong to no split.

    Note: unpickling executes code from the file; only convert trusted dumps.
    """
    raw = Path(raw_dir)
    objs = {key: _unpickle(raw / f"ind.{name}.{key}") for key in ("x", "y", "tx", "ty", "allx", "ally", "graph")}
    index_path = raw / f"ind.{name}.test.index"
    if not index_path.is_file():
        raise MissingFileError(f"missing file: {index_path}")
    test_index = np.array([int(line) for line in index_path.read_text().split()], dtype=np.int64)
    test_sorted = np.sort(test_index)

    tx = sp.csr_matrix(objs["tx"], dtype=DTYPE)
    ty = np.asarray(objs["ty"])
    if name.lower() == "citeseer":
        full_range = np.arange(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((full_range.size, tx.shape[1]), dtype=DTYPE)
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        tx = tx_ext.tocsr()
        ty_ext = np.zeros((full_range.size, ty.shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        ty = ty_ext

    features = sp.vstack([sp.csr_matrix(objs["allx"], dtype=DTYPE), tx]).tolil()
    onehot = np.vstack([np.asarray(objs["ally"]), ty])
    features[test_index, :] = features[test_sorted, :]
    onehot[test_index, :] = onehot[test_sorted, :]
    features = np.asarray(features.todense(), dtype=DTYPE)
    labels = np.argmax(onehot, axis=1).astype(np.int64)
    n = features.shape[0]

    graph = objs["graph"]
    rows, cols = [], []
    for u, nbrs in graph.items():
        for v in nbrs:
            if 0 <= u < n and 0 <= v < n:
                rows.append(u)
                cols.append(v)
    a = symmetrize(sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)))

    n_train = np.asarray(objs["y"]).shape[0]
    train = np.zeros(n, dtype=bool)
    train[:n_train] = True
    val = np.zeros(n, dtype=bool)
    val[n_train : n_train + 500] = True
    test = np.zeros(n, dtype=bool)
    test[test_index] = True
    g = Graph(a, features, labels, train, val & ~test, test, name=name.lower(), n_classes=onehot.shape[1])
    save_dataset(g, out_dir, homophily=round(edge_homophily(g), 4))
    return g


def convert_webkb(
    raw_dir: str | os.PathLike, name: str, out_dir: str | os.PathLike, split_index: int = 0, seed: int = 0
) -> Graph:
    """Convert a geom-gcn style dump (``out1_node_feature_label.txt``, ``out1_graph_edges.txt``).

    If ``<name>_split_0.6_0.2_<split_index>.npz`` exists its masks are used,
    otherwise a seeded 60/20/20 split is drawn.
    """
    raw = Path(raw_dir)
    node_lines = _lines(raw / "out1_node_feature_label.txt")[1:]
    feats, labels, ids = [], [], []
    for lineno, line in enumerate(node_lines, start=2):
        parts = line.split("\t")
        if len(parts) != 3:
            raise MalformedRowError(f"{raw / 'out1_node_feature_label.txt'}:{lineno}: expected 3 fields")
        ids.append(int(parts[0]))
        feats.append([float(v) for v in parts[1].split(",")])
        labels.append(int(parts[2]))
    order = np.argsort(ids)
    features = np.asarray(feats, dtype=DTYPE)[order]
    y = np.asarray(labels, dtype=np.int64)[order]
    n = features.shape[0]
    rows, cols = [], []
    for line in _lines(raw / "out1_graph_edges.txt")[1:]:
        u, v = line.split("\t")[:2]
        rows.append(int(u))
        cols.append(int(v))
    a = symmetrize(sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)))

    split_path = raw / f"{name}_split_0.6_0.2_{split_index}.npz"
    if split_path.is_file():
        with np.load(split_path) as s:
            train, val, test = (np.asarray(s[k], dtype=bool) for k in ("train_mask", "val_mask", "test_mask"))
    else:
        train, val, test = random_masks(y, (0.6, 0.2, 0.2), seed)
    g = Graph(a, features, y, train, val, test, name=name.lower(), n_classes=int(y.max()) + 1)
    save_dataset(g, out_dir, homophily=round(edge_homophily(g), 4))
    return g

