"""CSV/JSON/JSONL readers and writers shared by the command-line tools.

Numbers are written with ``repr`` so a float round-trips exactly and reruns
produce identical bytes.  All files are UTF-8 with LF line endings.
"""

import csv
import hashlib
import json
import math
import os

import numpy as np

from .model import GroupDataset, ModelError


class DataFileError(ModelError):
    """A data file is missing, malformed or has the wrong shape."""


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_matrix_csv(path):
    """Numeric CSV to a 2-d float array; a non-numeric first row is a header."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFileError(f"{path}: cannot open ({exc.strerror})") from exc
    rows = []
    width = None
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            cells = [c.strip() for c in row]
            if not rows and width is None and not all(_is_number(c) for c in cells):
                if any(_is_number(c) for c in cells):
                    bad = next(i for i, c in enumerate(cells) if not _is_number(c))
                    raise DataFileError(
                        f"{path}:{lineno}:{bad + 1}: not a number: {cells[bad]!r}"
                    )
                width = len(cells)  # header
                continue
            if width is None:
                width = len(cells)
            if len(cells) != width:
                raise DataFileError(
                    f"{path}:{lineno}: expected {width} columns, found {len(cells)}"
                )
            vals = []
            for col, c in enumerate(cells, start=1):
                try:
                    v = float(c)
                except ValueError:
                    raise DataFileError(f"{path}:{lineno}:{col}: not a number: {c!r}") from None
                if not math.isfinite(v):
                    raise DataFileError(f"{path}:{lineno}:{col}: non-finite value {c!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataFileError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def write_matrix_csv(path, a):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in a:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_rows_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")


def load_group(path, demean=False):
    """Group data file to a GroupDataset.

    With ``demean`` the column means are removed and n drops by one.
    """
    y = read_matrix_csv(path)
    n = y.shape[0]
    if demean:
        if n < 2:
            raise DataFileError(f"{path}: demeaning needs at least 2 rows")
        y = y - y.mean(axis=0)
        n -= 1
    s = y.T @ y
    return GroupDataset(0.5 * (s + s.T), n, y)


def load_groups(paths, demean=False):
    groups = [load_group(p, demean) for p in paths]
    p = groups[0].p
    for path, g in zip(paths, groups):
        if g.p != p:
            raise DataFileError(f"{path}: has {g.p} columns, expected {p}")
    return groups


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
