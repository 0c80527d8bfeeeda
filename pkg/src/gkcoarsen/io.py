"""Atomic file output and the CSV/JSON exports written by training runs."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _clean(obj):
    # JSON has no NaN/inf: emit null and the strings "inf"/"-inf"
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(path: str | os.PathLike, obj) -> None:
    atomic_write_text(path, json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_history(path, history) -> None:
    """Per-epoch CSV: epoch, loss, accuracies, drift ratio, recoarsen flag, cumulative seconds."""
    header = ["epoch", "loss", "train_acc", "val_acc", "test_acc", "drift", "recoarsened", "seconds"]
    write_csv(
        path,
        header,
        (
            [r.epoch, r.loss, r.train_acc, r.val_acc, r.test_acc, r.drift, r.recoarsened, r.seconds]
            for r in history
        ),
    )


def write_assignment(path, partition) -> None:
    write_csv(path, ["node_id", "cluster_id"], enumerate(partition.assignment.tolist()))


def write_embeddings(path, z: np.ndarray) -> None:
    header = ["node_id"] + [f"h{j}" for j in range(z.shape[1])]
    write_csv(path, header, ([i, *row] for i, row in enumerate(z.tolist())))
