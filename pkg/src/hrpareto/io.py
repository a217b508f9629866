"""JSON parameter files and CSV data files."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import GenHrParams, HrParams, check_threshold, validate_gen, validate_hr
from .errors import BadConfig, FileError
from .measures import FAMILY_NAMES, MeasureModel, Frechet, Gamma, Gaussian, LogNormal, Weibull


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise FileError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise BadConfig(f"{path} is not valid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise BadConfig(f"{path} must contain a JSON object")
    return obj


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise FileError(f"cannot write {path}: {exc.strerror}") from None


def _get(obj: dict, key: str):
    if key not in obj:
        raise BadConfig(f"parameter file lacks the field {key!r}")
    return obj[key]


def parse_model(obj: dict) -> tuple[HrParams | GenHrParams, np.ndarray]:
    """Standard or generalized parameters plus threshold (default ``1_d``)."""
    Q = np.asarray(_get(obj, "Q"), dtype=float)
    l = np.asarray(_get(obj, "l"), dtype=float)
    if "d" in obj and int(obj["d"]) != l.shape[0]:
        raise BadConfig("field 'd' disagrees with the length of 'l'")
    d = l.shape[0]
    a = check_threshold(obj.get("a", np.ones(d)), d)
    if "alpha" in obj:
        return validate_gen(obj["alpha"], Q, l), a
    return validate_hr(Q, l), a


def parse_threshold(obj: dict | None, d: int) -> np.ndarray:
    if obj is None or "a" not in obj:
        return np.ones(d)
    return check_threshold(obj["a"], d)


def parse_family(obj: dict, name: str | None = None) -> MeasureModel:
    name = (name or obj.get("family") or "").lower()
    if name not in FAMILY_NAMES:
        raise BadConfig(f"unknown family {name!r}; expected one of {sorted(FAMILY_NAMES)}")
    alpha = float(_get(obj, "alpha"))
    if name == "gaussian":
        fam = Gaussian(_get(obj, "Sigma"))
    elif name == "lognormal":
        fam = LogNormal(_get(obj, "m"), _get(obj, "Sigma"))
    elif name == "frechet":
        fam = Frechet(_get(obj, "lambda"), float(_get(obj, "beta")))
    elif name == "weibull":
        fam = Weibull(_get(obj, "lambda"), float(_get(obj, "beta")))
    else:
        fam = Gamma(_get(obj, "theta"), _get(obj, "beta"))
    return MeasureModel(fam, alpha)


def read_csv(path) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline()
            body = fh.read()
    except OSError as exc:
        raise FileError(f"cannot read {path}: {exc.strerror}") from None
    cols = [c.strip() for c in header.strip().split(",") if c.strip()]
    if not cols:
        raise BadConfig(f"{path} has no header row")
    rows = []
    for k, line in enumerate(body.splitlines(), start=2):
        if not line.strip():
            continue
        try:
            vals = [float(v) for v in line.split(",")]
        except ValueError:
            raise BadConfig(f"{path}:{k}: non-numeric entry") from None
        if len(vals) != len(cols):
            raise BadConfig(f"{path}:{k}: expected {len(cols)} columns")
        rows.append(vals)
    return np.asarray(rows, dtype=float).reshape(len(rows), len(cols))


def format_csv(X: np.ndarray, header: list[str] | None = None) -> str:
    """Comma-separated rows with shortest round-trip float formatting."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    header = header or [f"x{i + 1}" for i in range(X.shape[1])]
    lines = [",".join(header)]
    lines.extend(",".join(map(repr, row)) for row in X.tolist())
    return "\n".join(lines) + "\n"
