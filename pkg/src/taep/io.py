"""Plain-text file formats: matrices, embeddings, models.

Every format is line oriented and whitespace separated. Floats are written
with 17 significant digits so that a write/read cycle restores each value
bit for bit. Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .core import ORTHO_TOL, ModelParams

FORMAT_VERSION = 1
_SECTIONS = ("meta", "W", "W0", "U")


class FormatError(ValueError):
    """Malformed input file; the message carries ``path:line`` context."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line else self.path
        super().__init__(f"{where}: {message}")


def format_float(x) -> str:
    return format(float(x), ".17g")


def _data_lines(lines, start=1):
    """Yield ``(line_number, stripped_text)`` skipping blanks and comments."""
    for no, raw in enumerate(lines, start):
        text = raw.strip()
        if text and not text.startswith("#"):
            yield no, text


# -- matrices -----------------------------------------------------------------


def matrix_lines(A, comments=()):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    out = [f"# {c}" for c in comments]
    out.append(f"{A.shape[0]} {A.shape[1]}")
    out.extend(" ".join(format_float(v) for v in row) for row in A)
    return out


def _parse_matrix(numbered, path):
    """Parse a MatrixFile body from an iterator of numbered data lines."""
    try:
        no, header = next(numbered)
    except StopIteration:
        raise FormatError(path, 0, "missing 'rows cols' header") from None
    parts = header.split()
    if len(parts) != 2:
        raise FormatError(path, no, f"header must be 'rows cols', got {header!r}")
    try:
        rows, cols = int(parts[0]), int(parts[1])
    except ValueError:
        raise FormatError(path, no, f"header must hold two integers, got {header!r}") from None
    if rows < 0 or cols < 0:
        raise FormatError(path, no, "negative dimension in header")
    A = np.empty((rows, cols))
    for i in range(rows):
        try:
            no, text = next(numbered)
        except StopIteration:
            raise FormatError(path, no, f"expected {rows} rows, found {i}") from None
        fields = text.split()
        if len(fields) != cols:
            raise FormatError(path, no, f"expected {cols} values, found {len(fields)}")
        try:
            A[i] = [float(v) for v in fields]
        except ValueError as exc:
            raise FormatError(path, no, str(exc)) from None
    return A


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        numbered = _data_lines(fh)
        A = _parse_matrix(numbered, path)
        extra = next(numbered, None)
    if extra is not None:
        raise FormatError(path, extra[0], "unexpected data after the last row")
    return A


def write_matrix(path, A, comments=()):
    write_lines(path, matrix_lines(A, comments))


def write_similarity(path, R, names):
    """Similarity matrix with the label order recorded in a comment."""
    write_matrix(path, R, comments=("labels: " + " ".join(names),))


def read_similarity_labels(path):
    """Label names from a :func:`write_similarity` header, or ``None``."""
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            text = raw.strip()
            if text.startswith("# labels:"):
                return text[len("# labels:"):].split()
            if text and not text.startswith("#"):
                return None
    return None


# -- embeddings ---------------------------------------------------------------


def read_embeddings(path):
    """Word-vector text layout: ``name v1 v2 ... vm`` per line."""
    path = Path(path)
    names, rows = [], []
    seen = {}
    width = None
    with open(path, encoding="utf-8") as fh:
        for no, text in _data_lines(fh):
            fields = text.split()
            name, values = fields[0], fields[1:]
            if not values:
                raise FormatError(path, no, f"label {name!r} has no values")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise FormatError(path, no, f"label {name!r} has {len(values)} values, expected {width}")
            if name in seen:
                raise FormatError(path, no, f"duplicate label {name!r} (first on line {seen[name]})")
            try:
                rows.append([float(v) for v in values])
            except ValueError as exc:
                raise FormatError(path, no, str(exc)) from None
            seen[name] = no
            names.append(name)
    if not names:
        raise FormatError(path, 0, "no embeddings found")
    return names, np.array(rows)


def write_embeddings(path, names, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if len(names) != M.shape[0]:
        raise ValueError("one name per embedding row is required")
    _check_names(names)
    write_lines(path, [" ".join([n] + [format_float(v) for v in row]) for n, row in zip(names, M)])


# -- models -------------------------------------------------------------------


def model_lines(model: ModelParams):
    names = list(model.label_names)
    _check_names(names)
    L = len(names)
    meta = [
        ("format_version", str(FORMAT_VERSION)),
        ("beta", format_float(model.beta)),
        ("gamma", format_float(model.gamma)),
        ("lambda", format_float(model.lam)),
        ("r", str(model.r)),
        ("d", str(model.d)),
        ("m", str(model.m)),
        ("seen_count", str(model.seen_count)),
        ("unseen_count", str(L - model.seen_count)),
        ("labels", " ".join(names)),
    ]
    out = ["[meta]"] + [f"{k} = {v}" for k, v in meta]
    out += ["[W]"] + matrix_lines(model.W)
    out += ["[W0]"] + matrix_lines(model.W0.reshape(-1, 1))
    out += ["[U]"] + matrix_lines(model.U)
    return out


def write_model(path, model: ModelParams):
    write_lines(path, model_lines(model))


def read_model(path) -> ModelParams:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    blocks = {}
    current = None
    for no, text in _data_lines(lines):
        if text.startswith("[") and text.endswith("]"):
            current = text[1:-1].strip()
            if current not in _SECTIONS:
                raise FormatError(path, no, f"unknown section [{current}]")
            if current in blocks:
                raise FormatError(path, no, f"duplicate section [{current}]")
            blocks[current] = []
        elif current is None:
            raise FormatError(path, no, "content before the first section")
        else:
            blocks[current].append((no, text))
    for name in _SECTIONS:
        if name not in blocks:
            raise FormatError(path, 0, f"missing section [{name}]")

    meta = {}
    for no, text in blocks["meta"]:
        key, sep, value = text.partition("=")
        if not sep:
            raise FormatError(path, no, f"expected 'key = value', got {text!r}")
        meta[key.strip()] = (no, value.strip())
    mats = {}
    for name in ("W", "W0", "U"):
        it = iter(blocks[name])
        mats[name] = _parse_matrix(it, path)
        extra = next(it, None)
        if extra is not None:
            raise FormatError(path, extra[0], f"unexpected data in section [{name}]")

    def meta_value(key, cast):
        if key not in meta:
            raise FormatError(path, 0, f"[meta] lacks {key!r}")
        no, value = meta[key]
        try:
            return cast(value)
        except ValueError:
            raise FormatError(path, no, f"bad value for {key!r}: {value!r}") from None

    version = meta_value("format_version", int)
    if version != FORMAT_VERSION:
        raise FormatError(path, meta["format_version"][0], f"unsupported format version {version}")
    r, d, m = meta_value("r", int), meta_value("d", int), meta_value("m", int)
    Ls, Lu = meta_value("seen_count", int), meta_value("unseen_count", int)
    names = meta_value("labels", str).split()
    W, W0, U = mats["W"], mats["W0"], mats["U"]
    expected = {"W": (d, r), "W0": (d, 1), "U": (m, r)}
    for name, shape in expected.items():
        if mats[name].shape != shape:
            raise FormatError(path, 0, f"section [{name}] has shape {mats[name].shape}, [meta] implies {shape}")
    if len(names) != Ls + Lu:
        raise FormatError(path, meta["labels"][0], f"{len(names)} label names for {Ls} + {Lu} labels")
    err = float(np.linalg.norm(U.T @ U - np.eye(r)))
    if err > ORTHO_TOL:
        raise FormatError(path, 0, f"U columns are not orthonormal (deviation {err:.3e})")
    return ModelParams(
        W=W,
        W0=W0.ravel(),
        U=U,
        beta=meta_value("beta", float),
        gamma=meta_value("gamma", float),
        lam=meta_value("lambda", float),
        r=r,
        label_names=tuple(names),
        seen_count=Ls,
    )


# -- helpers ------------------------------------------------------------------


def _check_names(names):
    # '=' and ',' are field separators in prediction files
    for n in names:
        if not n or n.startswith("#") or any(c.isspace() or c in "=," for c in n):
            raise ValueError(f"label name {n!r} must be non-empty and contain no whitespace, '=' or ','")


def write_lines(path, lines):
    # "\n" endings regardless of platform keep outputs byte-identical
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
    os.replace(tmp, path)
