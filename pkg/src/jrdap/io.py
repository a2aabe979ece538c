"""Text exports: weight dictionaries, range-Doppler maps, timing tables.

Every writer takes an optional ``header`` mapping that is emitted as
``# key=value`` comment lines so artifacts carry their config hash and seed.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .array_beam import BeamDictionary


def _header_lines(header):
    return [f"# {k}={v}" for k, v in (header or {}).items()]


def read_header(path) -> dict:
    """Collect ``# key=value`` comment lines at the top of a text artifact."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                out[key.strip()] = value.strip()
    return out


def save_dictionary(path, dictionary: BeamDictionary, header=None):
    """One block per entry.

    Block layout: a line ``k delta_db phi_rad psl_db`` followed by M lines
    of ``re im`` with 17 significant digits.
    """
    K, M = dictionary.weights.shape
    lines = _header_lines({"K": K, "M": M, **(header or {})})
    for k in range(K):
        psl = dictionary.achieved_psl[k] if len(dictionary.achieved_psl) else np.nan
        lines.append(f"{k} {20 * np.log10(dictionary.levels[k]):.17g} {dictionary.phases[k]:.17g} "
                     f"{20 * np.log10(psl) if psl > 0 else float('-inf'):.17g}")
        for w in dictionary.weights[k]:
            lines.append(f"{w.real:.17g} {w.imag:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dictionary(path) -> BeamDictionary:
    meta = read_header(path)
    try:
        K, M = int(meta["K"]), int(meta["M"])
    except KeyError as exc:
        raise ValueError(f"{path}: header lacks {exc.args[0]}") from None
    rows = [ln.split() for ln in open(path) if ln.strip() and not ln.startswith("#")]
    if len(rows) != K * (M + 1):
        raise ValueError(f"{path}: expected {K * (M + 1)} data lines, found {len(rows)}")
    weights = np.empty((K, M), dtype=complex)
    levels, phases, psl = np.empty(K), np.empty(K), np.empty(K)
    for k in range(K):
        head = rows[k * (M + 1)]
        if int(head[0]) != k:
            raise ValueError(f"{path}: entry {k} labelled {head[0]}")
        levels[k] = 10.0 ** (float(head[1]) / 20.0)
        phases[k] = float(head[2])
        psl[k] = 10.0 ** (float(head[3]) / 20.0) if len(head) > 3 else np.nan
        body = np.array(rows[k * (M + 1) + 1 : (k + 1) * (M + 1)], dtype=float)
        weights[k] = body[:, 0] + 1j * body[:, 1]
    return BeamDictionary(weights, levels, phases, psl)


def save_map_db(path, estimates, header=None, floor_db=-300.0):
    """L x Q matrix of 20 log10 |x_hat|, comma separated; row l-1 is range cell l."""
    mag = np.abs(np.asarray(estimates))
    with np.errstate(divide="ignore"):
        db = np.maximum(20.0 * np.log10(mag), floor_db)
    with open(path, "w") as fh:
        for line in _header_lines(header):
            fh.write(line + "\n")
        np.savetxt(fh, db, delimiter=",", fmt="%.10g")


def load_map_db(path):
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)


def save_complex_matrix(path, values, header=None):
    """Lossless complex matrix export: columns alternate re, im."""
    values = np.asarray(values)
    inter = np.empty((values.shape[0], 2 * values.shape[1]))
    inter[:, 0::2] = values.real
    inter[:, 1::2] = values.imag
    with open(path, "w") as fh:
        for line in _header_lines(header):
            fh.write(line + "\n")
        np.savetxt(fh, inter, delimiter=",", fmt="%.17g")


def load_complex_matrix(path):
    inter = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return inter[:, 0::2] + 1j * inter[:, 1::2]


def save_timing(path, rows, header=None):
    """rows: iterable of dicts with method, cells, total_s (and optional extra columns)."""
    rows = list(rows)
    cols = ["method", "transmit", "cells", "total_s", "s_per_cell"]
    extra = sorted({k for r in rows for k in r} - set(cols))
    with open(path, "w", newline="") as fh:
        for line in _header_lines(header):
            fh.write(line + "\n")
        writer = csv.DictWriter(fh, fieldnames=cols + extra)
        writer.writeheader()
        for r in rows:
            r = dict(r)
            r.setdefault("s_per_cell", r["total_s"] / r["cells"])
            writer.writerow(r)


def save_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
