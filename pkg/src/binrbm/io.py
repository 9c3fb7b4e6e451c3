"""Plain-text file formats and atomic file writes.

Dataset::

    # binrbm-dataset N=<n> D=<d>
    +1 -1 +1 ...            (D lines of N tokens)

Model::

    # binrbm-model M=<m> N=<n> beta=<b>
    +1 -1 ...               (M lines of N tokens)

Variational state (natural parameters, 17 significant digits)::

    # binrbm-vstate M=<m> N=<n>
    <lam> <lam> ...         (M lines of N values)
"""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .model import Dataset, RbmModel
from .variational import VariationalState


class FormatError(ValueError):
    pass


def atomic_write(path, text: str) -> None:
    """Write ``text`` to a temporary file beside ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _spins(rows) -> str:
    return "".join(" ".join("+1" if x > 0 else "-1" for x in row) + "\n" for row in rows)


def _header(line: str, kind: str) -> dict[str, str]:
    parts = line.split()
    if len(parts) < 2 or parts[0] != "#" or parts[1] != f"binrbm-{kind}":
        raise FormatError(f"expected a '# binrbm-{kind}' header, got {line!r}")
    fields = {}
    for tok in parts[2:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise FormatError(f"malformed header field {tok!r}")
        fields[key] = val
    return fields


def _int_field(fields, key):
    try:
        return int(fields[key])
    except (KeyError, ValueError):
        raise FormatError(f"header field {key} missing or not an integer") from None


def _parse_spins(lines, rows, cols, what):
    if len(lines) != rows:
        raise FormatError(f"{what}: expected {rows} rows, found {len(lines)}")
    out = np.empty((rows, cols))
    table = {"+1": 1.0, "-1": -1.0}
    for r, line in enumerate(lines):
        toks = line.split()
        if len(toks) != cols:
            raise FormatError(f"{what}: row {r + 1} has {len(toks)} tokens, expected {cols}")
        try:
            out[r] = [table[t] for t in toks]
        except KeyError as exc:
            raise FormatError(f"{what}: row {r + 1} has token {exc.args[0]!r}, expected +1 or -1") from None
    return out


def _body(text):
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty file")
    return lines[0], [ln for ln in lines[1:] if ln.strip()]


def format_dataset(data: Dataset) -> str:
    return f"# binrbm-dataset N={data.n_visible} D={data.size}\n" + _spins(data.samples)


def parse_dataset(text: str) -> Dataset:
    head, rows = _body(text)
    f = _header(head, "dataset")
    n, d = _int_field(f, "N"), _int_field(f, "D")
    return Dataset(_parse_spins(rows, d, n, "dataset"), n_visible=n)


def format_model(model: RbmModel) -> str:
    if not model.is_binary:
        raise ValueError("only binary models can be written in the model file format")
    m, n = model.weights.shape
    return f"# binrbm-model M={m} N={n} beta={model.beta!r}\n" + _spins(model.weights)


def parse_model(text: str) -> RbmModel:
    head, rows = _body(text)
    f = _header(head, "model")
    m, n = _int_field(f, "M"), _int_field(f, "N")
    try:
        beta = float(f["beta"])
    except (KeyError, ValueError):
        raise FormatError("header field beta missing or not a number") from None
    return RbmModel.binary(_parse_spins(rows, m, n, "model"), beta)


def format_vstate(state: VariationalState) -> str:
    m, n = state.shape
    body = "".join(" ".join(f"{x:.17g}" for x in row) + "\n" for row in state.lam)
    return f"# binrbm-vstate M={m} N={n}\n" + body


def parse_vstate(text: str) -> VariationalState:
    head, rows = _body(text)
    f = _header(head, "vstate")
    m, n = _int_field(f, "M"), _int_field(f, "N")
    if len(rows) != m:
        raise FormatError(f"vstate: expected {m} rows, found {len(rows)}")
    try:
        lam = np.array([[float(t) for t in row.split()] for row in rows])
    except ValueError as exc:
        raise FormatError(f"vstate: {exc}") from None
    if lam.shape != (m, n):
        raise FormatError(f"vstate: expected {m}x{n} values, found shape {lam.shape}")
    return VariationalState(lam)


def read_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_text())


def write_dataset(path, data: Dataset) -> None:
    atomic_write(path, format_dataset(data))


def read_model(path) -> RbmModel:
    return parse_model(Path(path).read_text())


def write_model(path, model: RbmModel) -> None:
    atomic_write(path, format_model(model))


def read_vstate(path) -> VariationalState:
    return parse_vstate(Path(path).read_text())


def write_vstate(path, state: VariationalState) -> None:
    atomic_write(path, format_vstate(state))
