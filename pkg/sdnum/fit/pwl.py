"""
Concave piecewise-linear utility surrogate.

A model is a set of anchors y_i with fitted values u_i and supergradients
g_i >= 0; it evaluates to min_i { u_i + g_i . (y - y_i) }.

Text format (round-trips exactly, floats written with repr()):

    # sdnum pwl utility v1
    pwl <n> <dim> <objective> <kkt_residual>
    anchor <y_1> .. <y_dim> <value> <g_1> .. <g_dim> <raw>

`raw` is the sample the anchor was fitted to, or nan.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from sdnum.errors import ConfigError

CONSISTENCY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class PwlUtility:
    """
    Concave non-decreasing piecewise-linear function.

    Attributes:
        anchors: (n, dim) anchor allocations.
        values: (n,) fitted utility at each anchor.
        gradients: (n, dim) supergradient at each anchor, componentwise >= 0.
        raw: (n,) samples the fit was computed from (nan when unknown).
        objective: Sum of squared residuals of the fit.
        kkt_residual: Relative KKT residual reported by the solver.
    """

    anchors: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    raw: Optional[np.ndarray] = None
    objective: float = 0.0
    kkt_residual: float = 0.0
    _scale: float = field(init=False, repr=False, default=1.0)

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=float)
        if anchors.ndim == 1:
            anchors = anchors[:, None]
        n, dim = anchors.shape
        if n == 0:
            raise ConfigError("a PWL utility needs at least one anchor")
        values = np.asarray(self.values, dtype=float).reshape(-1)
        gradients = np.asarray(self.gradients, dtype=float).reshape(n, -1)
        raw = np.full(n, np.nan) if self.raw is None else np.asarray(self.raw, dtype=float)
        if values.shape != (n,) or gradients.shape != (n, dim) or raw.shape != (n,):
            raise ConfigError("anchors, values, gradients and raw must agree in shape")
        if np.any(gradients < 0):
            raise ConfigError("PWL gradients must be componentwise non-negative")
        arrays = {"anchors": anchors, "values": values, "gradients": gradients, "raw": raw}
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_scale", 1.0 + float(np.max(np.abs(values))))
        gap = self.consistency_gap()
        if gap > CONSISTENCY_TOL * self._scale:
            raise ConfigError(f"anchor hyperplanes are inconsistent by {gap:.3g}")

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    def consistency_gap(self) -> float:
        """Largest violation of u_j <= u_i + g_i . (y_j - y_i) over all pairs."""
        diff = self.anchors[None, :, :] - self.anchors[:, None, :]
        planes = self.values[:, None] + np.einsum("id,ijd->ij", self.gradients, diff)
        return float(max(0.0, np.max(self.values[None, :] - planes)))

    def max_slope(self) -> float:
        return float(self.gradients.max())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "anchors": self.anchors.tolist(),
            "values": self.values.tolist(),
            "gradients": self.gradients.tolist(),
            "raw": [None if np.isnan(r) else float(r) for r in self.raw],
            "objective": float(self.objective),
            "kkt_residual": float(self.kkt_residual),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PwlUtility":
        try:
            raw = data.get("raw")
            return cls(
                anchors=np.asarray(data["anchors"], dtype=float),
                values=np.asarray(data["values"], dtype=float),
                gradients=np.asarray(data["gradients"], dtype=float),
                raw=None if raw is None else [np.nan if r is None else r for r in raw],
                objective=float(data.get("objective", 0.0)),
                kkt_residual=float(data.get("kkt_residual", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"malformed PWL utility: {e}") from e

    def to_text(self, path: Union[str, Path, None] = None) -> str:
        lines = [
            "# sdnum pwl utility v1",
            f"pwl {self.size} {self.dim} {float(self.objective)!r} {float(self.kkt_residual)!r}",
        ]
        for y, u, g, r in zip(self.anchors, self.values, self.gradients, self.raw):
            fields_ = [repr(float(v)) for v in (*y, u, *g, r)]
            lines.append("anchor " + " ".join(fields_))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_text(cls, source: Union[str, Path]) -> "PwlUtility":
        if isinstance(source, Path) or "\n" not in source:
            source = Path(source).read_text(encoding="utf-8")
        header = None
        rows = []
        for lineno, raw_line in enumerate(source.splitlines(), start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "pwl" and len(parts) == 5:
                    header = (int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4]))
                elif parts[0] == "anchor" and header is not None:
                    dim = header[1]
                    if len(parts) != 2 * dim + 3:
                        raise ValueError(f"expected {2 * dim + 2} numbers")
                    rows.append([float(v) for v in parts[1:]])
                else:
                    raise ValueError(f"unexpected record '{parts[0]}'")
            except ValueError as e:
                raise ConfigError(f"PWL text line {lineno}: {e}") from e
        if header is None or len(rows) != header[0]:
            raise ConfigError("PWL text needs a header and one anchor line per anchor")
        n, dim, objective, kkt = header
        table = np.asarray(rows, dtype=float)
        return cls(
            anchors=table[:, :dim],
            values=table[:, dim],
            gradients=table[:, dim + 1 : 2 * dim + 1],
            raw=table[:, 2 * dim + 1],
            objective=objective,
            kkt_residual=kkt,
        )

    @classmethod
    def constant(cls, value: float, dim: int = 1) -> "PwlUtility":
        """Flat model: one anchor at the origin with zero gradient."""
        return cls(anchors=np.zeros((1, dim)), values=[value], gradients=np.zeros((1, dim)))


def evaluate_pwl(model: PwlUtility, y: Any) -> Union[float, np.ndarray]:
    """
    Evaluate min_i { u_i + g_i . (y - y_i) }.

    Args:
        model: Fitted surrogate.
        y: One allocation (scalar or length-dim vector), or an (m, dim) batch.

    Returns:
        A float for one allocation, an (m,) array for a batch.
    """
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 0:
        single = True
    elif arr.ndim == 1:
        single = model.dim > 1 or arr.size == 1
    else:
        single = False
    points = arr.reshape(1, -1) if single else arr.reshape(-1, model.dim)
    if points.shape[1] != model.dim:
        raise ConfigError(f"allocation has {points.shape[1]} components, model has {model.dim}")
    diff = points[:, None, :] - model.anchors[None, :, :]
    planes = model.values[None, :] + np.einsum("mnd,nd->mn", diff, model.gradients)
    out = planes.min(axis=1)
    return float(out[0]) if single else out
