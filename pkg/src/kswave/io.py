"""CSV/JSON writers with fixed formatting and run manifests."""

from __future__ import annotations

import hashlib
import json
import platform
from pathlib import Path

import numpy as np


def format_number(x):
    """17 significant digits, enough to round-trip a double."""
    return "%.17g" % x


def write_csv(path, header, columns):
    """Write equally long columns as CSV; complex columns are rejected.

    Strings are written verbatim so categorical columns (e.g. ``side``) can be
    mixed with numeric ones.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.atleast_1d(np.asarray(col)) for col in columns]
    n = len(cols[0]) if cols else 0
    if any(len(col) != n for col in cols):
        raise ValueError("columns differ in length")
    lines = [",".join(header)]
    for i in range(n):
        cells = []
        for col in cols:
            v = col[i]
            if isinstance(v, (str, np.str_)):
                cells.append(str(v))
            elif np.iscomplexobj(v):
                raise TypeError("split complex columns into real and imaginary parts")
            else:
                cells.append(format_number(float(v)))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Read a numeric CSV written by :func:`write_csv` into a dict of arrays."""
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    rows = [line.split(",") for line in text[1:]]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in rows]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def _default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, default=_default)


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")
    return path


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=_default).encode()).hexdigest()


def versions():
    import scipy

    from . import __version__

    return {
        "kswave": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def write_manifest(outdir, config, files, command):
    """Record config hash, library versions and a checksum per emitted file."""
    outdir = Path(outdir)
    entries = {}
    for f in files:
        f = Path(f)
        entries[str(f.relative_to(outdir)) if f.is_relative_to(outdir) else str(f)] = sha256_file(f)
    manifest = {
        "command": command,
        "config": config,
        "config_sha256": config_hash(config),
        "versions": versions(),
        "files": entries,
    }
    return write_json(outdir / "manifest.json", manifest)
