"""Run configuration: flat ``key = value`` files, command-line overrides, validation.

Shapes are given either as a polygon file path or as a builtin spec:
``disk:R``, ``disk:R@cx,cy``, ``square:side`` or ``rect:w,h``; an optional
``@cx,cy`` recentres any builtin.  Disks are regular 64-gons unless
``disk_sides`` says otherwise.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ConfigError
from .geometry import ConvexPolygon, Polygon, read_polygon

COMMENT = "#"

_NUMBER = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TERM = re.compile(rf"([+-])?({_NUMBER})?(?:(\*)?([xy]))?")


@dataclass(frozen=True)
class AffineLambda:
    """``lambda(x, y) = a + b*x + c*y``; affine, hence concave."""

    a: float
    b: float
    c: float

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return self.a + self.b * pts[:, 0] + self.c * pts[:, 1]

    @property
    def is_constant(self) -> bool:
        return self.b == 0 and self.c == 0

    def range_on(self, bbox) -> tuple[float, float]:
        """Extreme values over the box ``(xmin, xmax, ymin, ymax)``; attained at corners."""
        x0, x1, y0, y1 = bbox
        corners = np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]], dtype=float)
        vals = self(corners)
        return float(vals.min()), float(vals.max())


def parse_affine(text: str) -> AffineLambda:
    """Parse ``a+b*x+c*y`` (terms in any order, each optional, signs allowed)."""
    s = text.replace(" ", "")
    if not s:
        raise ValueError("empty expression")
    coef = {"": 0.0, "x": 0.0, "y": 0.0}
    seen: set[str] = set()
    pos = 0
    while pos < len(s):
        m = _TERM.match(s, pos)
        if m is None or m.end() == pos:
            raise ValueError(f"cannot parse {text!r} at offset {pos}")
        sign, num, star, var = m.groups()
        if num is None and var is None:
            raise ValueError(f"cannot parse {text!r} at offset {pos}")
        if pos > 0 and sign is None:
            raise ValueError(f"missing operator in {text!r} at offset {pos}")
        if star and num is None:
            raise ValueError(f"dangling '*' in {text!r}")
        var = var or ""
        if var in seen:
            raise ValueError(f"repeated term {var or 'constant'!r} in {text!r}")
        seen.add(var)
        value = float(num) if num is not None else 1.0
        coef[var] = -value if sign == "-" else value
        pos = m.end()
    return AffineLambda(coef[""], coef["x"], coef["y"])


def _shape(value: str, base: Path | None, sides: int) -> Polygon:
    kind, _, rest = value.partition(":")
    builtin = {"disk", "square", "rect"}
    if kind not in builtin or not rest:
        path = Path(value)
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.exists():
            raise FileNotFoundError(str(path))
        return read_polygon(path)
    body, _, at = rest.partition("@")
    center = tuple(float(v) for v in at.split(",")) if at else (0.0, 0.0)
    if len(center) != 2:
        raise ValueError("centre needs two coordinates")
    nums = [float(v) for v in body.split(",")]
    if kind == "disk" and len(nums) == 1:
        return ConvexPolygon.regular(nums[0], sides, center)
    if kind == "square" and len(nums) == 1:
        return ConvexPolygon.rectangle(nums[0], nums[0], center)
    if kind == "rect" and len(nums) == 2:
        return ConvexPolygon.rectangle(nums[0], nums[1], center)
    raise ValueError(f"bad shape spec {value!r}")


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(t) for t in re.split(r"[,\s]+", v.strip()) if t)


def _positive(v: str) -> float:
    x = float(v)
    if not x > 0 or not math.isfinite(x):
        raise ValueError("must be a positive number")
    return x


P_RANGE = (1.2, 8.0)


def _exponent(v: str) -> float:
    # the library accepts any p > 1; the Picard scheme degrades outside this range
    x = float(v)
    if not P_RANGE[0] <= x <= P_RANGE[1]:
        raise ValueError(f"p must lie in [{P_RANGE[0]}, {P_RANGE[1]}]")
    return x


def _level(v: str) -> float:
    x = float(v)
    if not 0 < x < 1:
        raise ValueError("level must lie in (0, 1)")
    return x


def _count(v: str) -> int:
    n = int(v)
    if n < 1:
        raise ValueError("must be a positive integer")
    return n


def _bbox(v: str) -> tuple[float, ...]:
    b = _floats(v)
    if len(b) != 4 or not (b[0] < b[1] and b[2] < b[3]):
        raise ValueError("bbox needs xmin xmax ymin ymax with xmin < xmax and ymin < ymax")
    return b


KEYS: dict[str, Callable[[str], Any]] = {
    "p": _exponent,
    "level": _level,
    "lambda": str,
    "omega": _positive,
    "bernoulli_omega": _positive,
    "grid_h": _positive,
    "bbox": _bbox,
    "margin": float,
    "outer_tol": _positive,
    "outer_max": _count,
    "convexify": _bool,
    "out": str,
    "figures": _bool,
    "inner": str,
    "outer": str,
    "domain0": str,
    "domain1": str,
    "disk_sides": _count,
    "N": _count,
    "r": _positive,
    "R": _positive,
    "steps": _count,
    "t_grid": _floats,
    "fraction": _positive,
    "joining": str,
    "joining_a": _positive,
    "joining_alpha": _positive,
    "gain": _positive,
    "picard_tol": _positive,
    "picard_max": _count,
    "eps_reg": _positive,
    "linear_solver": str,
}


def parse_lines(text: str) -> dict[str, tuple[str, int]]:
    """Raw ``key -> (value, line)`` from config text; comments and blank lines skipped."""
    out: dict[str, tuple[str, int]] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(COMMENT, 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().replace("-", "_"), value.strip()
        if not sep or not key:
            raise ConfigError("expected key = value", line=n)
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", key=key, line=n)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", key=key, line=n)
        if not value:
            raise ConfigError(f"empty value for {key!r}", key=key, line=n)
        out[key] = (value, n)
    return out


@dataclass
class RunConfig:
    """Validated parameters plus the line each came from (``None`` for command-line values)."""

    values: dict[str, Any] = field(default_factory=dict)
    lines: dict[str, int | None] = field(default_factory=dict)
    base: Path | None = None

    @classmethod
    def build(
        cls, raw: Mapping[str, tuple[str, int | None]], base: Path | None = None
    ) -> "RunConfig":
        cfg = cls(base=base)
        for key, (text, line) in raw.items():
            try:
                cfg.values[key] = KEYS[key](text)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", key=key, line=line) from None
            cfg.lines[key] = line
        return cfg

    @classmethod
    def load(cls, path: str | Path | None, overrides: Mapping[str, str] | None = None) -> "RunConfig":
        raw: dict[str, tuple[str, int | None]] = {}
        base = None
        if path is not None:
            p = Path(path)
            try:
                text = p.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config file {p}: {exc.strerror}", key="config") from None
            raw.update(parse_lines(text))
            base = p.parent
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            raw[key] = (str(value), None)
        return cls.build(raw, base)

    def __contains__(self, key: str) -> bool:
        return key in self.values

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def require(self, key: str) -> Any:
        if key not in self.values:
            raise ConfigError(f"missing required key {key!r}", key=key)
        return self.values[key]

    def fail(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, key=key, line=self.lines.get(key))

    def shape(self, key: str, required: bool = True) -> Polygon | None:
        if key not in self.values:
            if required:
                raise ConfigError(f"missing required key {key!r}", key=key)
            return None
        try:
            return _shape(self.values[key], self.base, self.get("disk_sides", 64))
        except FileNotFoundError as exc:
            raise self.fail(key, f"file not found for {key!r}: {exc}") from None
        except (ValueError, OSError) as exc:
            raise self.fail(key, f"bad shape for {key!r}: {exc}") from None

    def convex_shape(self, key: str, required: bool = True) -> ConvexPolygon | None:
        poly = self.shape(key, required)
        if poly is None or isinstance(poly, ConvexPolygon):
            return poly
        if not self.get("convexify", True):
            raise self.fail(key, f"{key!r} must be convex")
        try:
            return ConvexPolygon(poly.vertices)
        except ValueError as exc:
            raise self.fail(key, f"{key!r} must be convex: {exc}") from None

    def distance(self, bbox) -> tuple[float | AffineLambda, float, float]:
        """The lambda value or affine function with its range over ``bbox``."""
        text = self.require("lambda")
        try:
            expr = parse_affine(text)
        except ValueError as exc:
            raise self.fail("lambda", f"bad lambda expression: {exc}") from None
        lo, hi = expr.range_on(bbox)
        if not lo > 0:
            raise self.fail("lambda", f"lambda must stay positive on the grid box (minimum {lo:.4g})")
        if expr.is_constant:
            return expr.a, lo, hi
        return expr, lo, hi
