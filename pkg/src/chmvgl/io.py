"""File formats: headerless matrix CSVs, edge lists, manifests, results JSON, configs."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import ValidationError

MATRIX_FMT = "%.17g"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


def write_matrix_csv(path, M: np.ndarray) -> None:
    """Write a 2-D array as headerless CSV with round-trip float precision."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    np.savetxt(path, M, delimiter=",", fmt=MATRIX_FMT)


def read_matrix_csv(path) -> np.ndarray:
    M = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    return M


def laplacian_to_edges(L: np.ndarray) -> list[tuple[int, int, float]]:
    """``(i, j, -L_ij)`` for every nonzero off-diagonal with ``i < j``."""
    L = np.asarray(L, dtype=float)
    iu, ju = np.triu_indices(L.shape[0], k=1)
    w = -L[iu, ju]
    keep = w != 0
    return [(int(i), int(j), float(x)) for i, j, x in zip(iu[keep], ju[keep], w[keep])]


def edges_to_laplacian(edges, n: int) -> np.ndarray:
    A = np.zeros((n, n))
    for i, j, w in edges:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValidationError(f"edge ({i}, {j}) invalid for n={n}")
        A[i, j] = A[j, i] = w
    return np.diag(A.sum(axis=1)) - A


def write_edge_list(path, L: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("i,j,weight\n")
        for i, j, w in laplacian_to_edges(L):
            fh.write(f"{i},{j},{w!r}\n")


def read_edge_list(path) -> list[tuple[int, int, float]]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "i,j,weight":
            raise ValidationError(f"{path}: expected header 'i,j,weight', got {header!r}")
        out = []
        for line in fh:
            if line.strip():
                i, j, w = line.strip().split(",")
                out.append((int(i), int(j), float(w)))
    return out


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_jsonable(obj), fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_config(path) -> dict:
    """Read a YAML or JSON config file into a dict (empty file gives ``{}``)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError:
        raise
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    else:
        import yaml

        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
        data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    return data


@dataclass
class DatasetManifest:
    n: int
    K: int
    views: list[str]
    d: list[int]
    truth_edges: list[str] | None = None
    hubs: list[int] | None = None
    generator: dict | None = None
    seed: int | None = None
    root: Path = field(default=Path("."), repr=False, compare=False)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def load_signals(self):
        from .graph import MultiviewSignals

        views = []
        for k, (rel, dk) in enumerate(zip(self.views, self.d)):
            X = read_matrix_csv(self.resolve(rel))
            if X.shape != (self.n, dk):
                raise ValidationError(f"view {k} ({rel}) has shape {X.shape}, manifest says "
                                      f"({self.n}, {dk})")
            views.append(X)
        return MultiviewSignals(views)

    def load_truth(self) -> list[np.ndarray] | None:
        if not self.truth_edges:
            return None
        return [edges_to_laplacian(read_edge_list(self.resolve(p)), self.n)
                for p in self.truth_edges]

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("root")
        return out

    def save(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        write_json(path, self.to_dict())
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        data = read_json(path)
        try:
            m = cls(**data)
        except TypeError as exc:
            raise ConfigError(f"malformed manifest {path}: {exc}") from exc
        m.root = path.parent
        if len(m.views) != m.K or len(m.d) != m.K:
            raise ConfigError(f"manifest {path}: K={m.K} but {len(m.views)} views, {len(m.d)} d")
        if m.truth_edges is not None and len(m.truth_edges) != m.K:
            raise ConfigError(f"manifest {path}: need one truth edge list per view")
        return m


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"{path} is not writable")
    return path
