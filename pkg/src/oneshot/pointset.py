"""Point sets, boxes and the text file format shared by every CLI command."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np


class DimensionError(ValueError):
    pass


class DomainError(ValueError):
    pass


class PointSetParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _frozen(np.atleast_1d(self.lower))
        upper = _frozen(np.atleast_1d(self.upper))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise DimensionError("lower and upper must be vectors of equal length")
        if not np.all(lower < upper):
            raise DomainError("box requires lower < upper in every dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def cube(cls, d: int, lower: float = 0.0, upper: float = 1.0) -> "Box":
        return cls(np.full(d, lower, dtype=float), np.full(d, upper, dtype=float))

    @classmethod
    def unit(cls, d: int) -> "Box":
        return cls.cube(d, 0.0, 1.0)

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.width))

    def is_unit(self) -> bool:
        return bool(np.all(self.lower == 0.0) and np.all(self.upper == 1.0))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((x >= self.lower) & (x <= self.upper)))

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(
            self.upper, other.upper
        )

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    def __repr__(self) -> str:
        if np.all(self.lower == self.lower[0]) and np.all(self.upper == self.upper[0]):
            return f"Box([{self.lower[0]:g}, {self.upper[0]:g}]^{self.d})"
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class PointSet:
    """An immutable ``n x d`` design together with its domain and provenance.

    ``points`` is stored row-major, one row per point. ``provenance`` is a
    free-form string (usually ``GeneratorSpec.describe()``) and ``seed`` is the
    seed of stochastic generators or ``None``.
    """

    points: np.ndarray
    domain: Box
    provenance: str = "unknown"
    seed: Optional[int] = None
    id: str = field(default="")

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, order="C")
        if pts.ndim == 1:
            pts = pts.reshape(1, -1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DimensionError(f"points must be a non-empty n x d array, got shape {pts.shape}")
        if pts.shape[1] != self.domain.d:
            raise DimensionError(
                f"points have dimension {pts.shape[1]} but domain has dimension {self.domain.d}"
            )
        if not np.all(np.isfinite(pts)):
            raise DomainError("points must be finite")
        outside = (pts < self.domain.lower) | (pts > self.domain.upper)
        if outside.any():
            i, j = np.argwhere(outside)[0]
            raise DomainError(f"point {i} coordinate {j} = {pts[i, j]!r} outside {self.domain!r}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if not self.id:
            object.__setattr__(self, "id", self.digest()[:16])

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.points.tobytes())
        h.update(self.domain.lower.tobytes())
        h.update(self.domain.upper.tobytes())
        return h.hexdigest()

    def replace_points(self, points, **kwargs) -> "PointSet":
        kw = dict(domain=self.domain, provenance=self.provenance, seed=self.seed)
        kw.update(kwargs)
        return PointSet(points, **kw)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointSet):
            return NotImplemented
        return (
            np.array_equal(self.points, other.points)
            and self.domain == other.domain
            and self.provenance == other.provenance
            and self.seed == other.seed
        )

    def __hash__(self):
        return hash(self.digest())


def scale(ps: PointSet, target: Box) -> PointSet:
    """Map a unit-cube design affinely onto ``target``."""
    if ps.d != target.d:
        raise DimensionError(f"point set has dimension {ps.d}, target box has {target.d}")
    if not ps.domain.is_unit():
        raise DomainError("scale expects a point set in the unit cube")
    pts = target.lower + ps.points * target.width
    # rounding may push the image of 1.0 a hair past the upper bound
    pts = np.clip(pts, target.lower, target.upper)
    return PointSet(pts, target, ps.provenance, ps.seed, id=ps.id)


def unscale(ps: PointSet) -> PointSet:
    """Inverse of :func:`scale`: map a design back into the unit cube."""
    box = ps.domain
    pts = np.clip((ps.points - box.lower) / box.width, 0.0, 1.0)
    return PointSet(pts, Box.unit(ps.d), ps.provenance, ps.seed, id=ps.id)


# --- file format -----------------------------------------------------------

PathLike = Union[str, Path]


def _fmt(x: float) -> str:
    # repr gives the shortest decimal string that round-trips exactly
    return repr(float(x))


def write_pointset(ps: PointSet, path: PathLike) -> None:
    lines = [
        "# oneshot point set",
        f"# n: {ps.n}",
        f"# d: {ps.d}",
        "# lower: " + " ".join(_fmt(v) for v in ps.domain.lower),
        "# upper: " + " ".join(_fmt(v) for v in ps.domain.upper),
        f"# provenance: {ps.provenance}",
        f"# seed: {'none' if ps.seed is None else ps.seed}",
        f"# id: {ps.id}",
    ]
    lines.extend(" ".join(_fmt(v) for v in row) for row in ps.points)
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_floats(text: str, lineno: int) -> list:
    try:
        return [float(tok) for tok in text.split()]
    except ValueError as exc:
        raise PointSetParseError(f"malformed number ({exc})", lineno) from None


def read_pointset(path: PathLike) -> PointSet:
    """Read a point-set file written by :func:`write_pointset`.

    Files without a ``# lower``/``# upper`` header are taken to live in the unit
    cube, which makes hand-written or third-party coordinate lists usable.
    """
    meta = {}
    rows = []
    dim = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, value = body.partition(":")
                    meta[key.strip()] = (value.strip(), lineno)
                continue
            row = _parse_floats(line, lineno)
            if dim is None:
                dim = len(row)
            elif len(row) != dim:
                raise PointSetParseError(
                    f"inconsistent dimension: expected {dim} coordinates, found {len(row)}", lineno
                )
            rows.append((row, lineno))
    if not rows:
        raise PointSetParseError("file contains no points")

    if "lower" in meta and "upper" in meta:
        lower = _parse_floats(*meta["lower"])
        upper = _parse_floats(*meta["upper"])
        if len(lower) != dim or len(upper) != dim:
            raise PointSetParseError(
                f"domain header has dimension {len(lower)}, points have {dim}", meta["lower"][1]
            )
        domain = Box(lower, upper)
    else:
        domain = Box.unit(dim)

    pts = np.array([r for r, _ in rows], dtype=float)
    for (row, lineno), x in zip(rows, pts):
        if not domain.contains(x):
            raise PointSetParseError(f"coordinate outside declared domain {domain!r}", lineno)

    provenance = meta.get("provenance", ("file",))[0]
    seed_text = meta.get("seed", ("none",))[0]
    seed = None if seed_text == "none" else int(seed_text)
    ps_id = meta.get("id", ("",))[0]
    return PointSet(pts, domain, provenance, seed, id=ps_id)


def as_points(x: Union[PointSet, Sequence, np.ndarray]) -> np.ndarray:
    if isinstance(x, PointSet):
        return x.points
    return np.atleast_2d(np.asarray(x, dtype=float))
