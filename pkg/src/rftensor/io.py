"""File formats: T3F tensors, CSV results, key-value experiment configs."""
from __future__ import annotations

import configparser
import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rf_sim import SensingEnsemble


class ConfigError(ValueError):
    pass


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# T3F tensor files


def write_t3f(path, A: np.ndarray) -> None:
    A = np.asarray(A, dtype=float)
    if A.ndim != 3:
        raise FormatError(f"T3F stores third-order tensors, got shape {A.shape}")
    n1, n2, n3 = A.shape
    lines = ["t3f 1", f"{n1} {n2} {n3}"]
    for tube in A.reshape(n1 * n2, n3):
        lines.append(" ".join(f"{v:.17g}" for v in tube))
    Path(path).write_text("\n".join(lines) + "\n")


def read_t3f(path) -> np.ndarray:
    tokens = Path(path).read_text().split()
    if tokens[:2] != ["t3f", "1"]:
        raise FormatError(f"{path}: not a T3F version 1 file")
    try:
        dims = tuple(int(t) for t in tokens[2:5])
        values = np.array([float(t) for t in tokens[5:]])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed T3F content") from exc
    if len(dims) != 3 or min(dims) < 1 or values.size != np.prod(dims):
        raise FormatError(f"{path}: expected {dims} with matching value count, got {values.size}")
    return values.reshape(dims)


# ---------------------------------------------------------------------------
# CSV


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_ensemble(out_dir, H: SensingEnsemble) -> None:
    out_dir = Path(out_dir)
    A = H.matrix
    rows = []
    for m in range(H.M):
        link = H.links[m] if H.links else None
        rows.append(
            (m, link.tx if link else -1, link.rx if link else -1, H.y[m], A.indptr[m + 1] - A.indptr[m])
        )
    write_csv(out_dir / "ensemble.csv", ("m", "tx", "rx", "y_m", "nnz"), rows)
    triplets = (
        (m, int(A.indices[p]), A.data[p])
        for m in range(H.M)
        for p in range(A.indptr[m], A.indptr[m + 1])
    )
    write_csv(out_dir / "sensing.csv", ("m", "voxel_linear_index", "distance"), triplets)


# ---------------------------------------------------------------------------
# key-value config files (INI syntax)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


PARSERS = {
    "scene": {
        "counts": _ints,
        "voxel_size": _floats,
        "origin": _floats,
        "nodes": int,
        "rings": int,
        "stagger": _bool,
    },
    "channel": {
        "tx_power": float,
        "path_loss_exponent": float,
        "reference_loss": float,
        "noise_sigma": float,
    },
    "phantom": {
        "kind": str,
        "rank": int,
        "attenuation": float,
        "seed": int,
    },
    "solver": {
        "rank": int,
        "iters": int,
        "transform": str,
        "backend": str,
        "lambda": float,
        "early_stop_tol": float,
    },
    "experiment": {
        "rate": float,
        "rates": _floats,
        "trials": int,
        "seed": int,
        "workers": int,
    },
}


def read_config(path) -> dict[str, dict]:
    """Parse an INI-style config into ``{section: {key: typed value}}``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    out: dict[str, dict] = {}
    for section in cp.sections():
        if section not in PARSERS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        parsed = {}
        for key, raw in cp.items(section):
            if key not in PARSERS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                parsed[key] = PARSERS[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for {section}.{key}: {raw!r}") from exc
        out[section] = parsed
    return out
