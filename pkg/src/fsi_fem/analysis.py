"""Error norms, convergence-rate fits and report serialization."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import eval_shape
from .dofs import FEField, Space, evaluate_quadrature
from .mesh import Mesh

NORM_DEGREE = 8
ERROR_COLUMNS = ("err_u_L2", "err_u_H1", "err_eta_L2", "err_eta_H1", "err_w_L2")


def error_norm(f: FEField | tuple, value_fn=None, grad_fn=None, norm: str = "L2", t: float = 0.0,
               degree: int = NORM_DEGREE) -> float:
    """``||f - exact||`` over the field's region.

    ``norm`` is ``L2``, ``H1_semi`` or ``H1``.  ``value_fn(x, y, t)`` returns
    ``(n, C)``, ``grad_fn`` returns ``(n, C, 2)``; ``None`` stands for zero.
    ``f`` may also be a ``(space, coeffs)`` pair.
    """
    space, coeffs = (f.space, f.coeffs) if isinstance(f, FEField) else f
    if norm not in ("L2", "H1_semi", "H1"):
        raise ValueError(f"unknown norm {norm!r}")
    qd = space.quad_data(degree)
    vals, grads = evaluate_quadrature(space, coeffs, degree)
    x, y, w = qd.x, qd.y, qd.weights
    total = 0.0
    if norm in ("L2", "H1"):
        ex = 0.0 if value_fn is None else np.asarray(value_fn(x, y, t), dtype=float).reshape(vals.shape)
        total += float(np.sum(w * np.sum((vals - ex) ** 2, axis=-1)))
    if norm in ("H1_semi", "H1"):
        ex = 0.0 if grad_fn is None else np.asarray(grad_fn(x, y, t), dtype=float).reshape(grads.shape)
        total += float(np.sum(w * np.sum((grads - ex) ** 2, axis=(-2, -1))))
    return math.sqrt(total)


@dataclass
class RateFit:
    adjacent: list[float]
    slope: float | None
    converged_to_zero: bool = False

    def as_dict(self):
        return {"adjacent": self.adjacent, "slope": self.slope, "converged_to_zero": self.converged_to_zero}


def fit_rate(pairs) -> RateFit:
    """Rates from ``(h, error)`` pairs: adjacent log-ratios and the least-squares slope."""
    pairs = [(float(h), float(e)) for h, e in pairs]
    if len(pairs) < 2:
        raise ValueError("need at least two (h, error) pairs to fit a rate")
    hs = np.array([p[0] for p in pairs])
    es = np.array([p[1] for p in pairs])
    if np.any(hs <= 0):
        raise ValueError("mesh sizes must be positive")
    if np.any(es <= 0):
        return RateFit([], None, converged_to_zero=True)
    adj = [float(np.log(es[i] / es[i + 1]) / np.log(hs[i] / hs[i + 1])) for i in range(len(pairs) - 1)]
    slope = float(np.polyfit(np.log(hs), np.log(es), 1)[0])
    return RateFit(adj, slope)


@dataclass
class ConvergenceReport:
    case: str
    element: str
    variable: str  # "h" or "tau"
    rows: list[dict] = field(default_factory=list)
    expected: dict[str, tuple[float, float]] = field(default_factory=dict)  # column -> (rate, tol); tol<0 means ">= rate+tol"
    rates: dict[str, RateFit] = field(default_factory=dict)

    def add(self, h: float, tau: float, errors: dict):
        self.rows.append({"h": h, "tau": tau, **errors})

    def fit(self):
        key = self.variable
        ordered = sorted(self.rows, key=lambda r: -r[key])
        xs = [r[key] for r in ordered]
        if len(set(xs)) != len(xs):
            raise ValueError(f"{key} values must be distinct")
        cols = [c for c in ERROR_COLUMNS if ordered and c in ordered[0]]
        self.rates = {c: fit_rate([(r[key], r[c]) for r in ordered]) for c in cols}
        return self.rates

    def gates(self) -> dict[str, bool]:
        if not self.rates:
            self.fit()
        out = {}
        for col, (rate, tol) in self.expected.items():
            fitres = self.rates.get(col)
            if fitres is None or fitres.slope is None:
                out[col] = bool(fitres is not None and fitres.converged_to_zero)
            elif tol >= 0:
                out[col] = abs(fitres.slope - rate) <= tol
            else:
                out[col] = fitres.slope >= rate + tol
        return out

    @property
    def passed(self) -> bool:
        return all(self.gates().values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", "element", "h", "tau", *ERROR_COLUMNS])
        for r in self.rows:
            w.writerow([self.case, self.element, repr(r["h"]), repr(r["tau"]),
                        *(repr(float(r[c])) if c in r else "" for c in ERROR_COLUMNS)])
        return buf.getvalue()

    def summary(self) -> dict:
        if not self.rates:
            self.fit()
        return {
            "case": self.case,
            "element": self.element,
            "variable": self.variable,
            "rates": {c: f.slope for c, f in self.rates.items()},
            "adjacent_rates": {c: f.adjacent for c, f in self.rates.items()},
            "expected": {c: {"rate": r, "tolerance": tol} for c, (r, tol) in self.expected.items()},
            "gates": self.gates(),
            "pass": self.passed,
        }

    def plot_data(self) -> dict[str, str]:
        """Two-column ``log10(h) log10(error)`` text per error column."""
        out = {}
        key = self.variable
        for c in ERROR_COLUMNS:
            lines = [f"# log10({key}) log10({c})"]
            for r in sorted(self.rows, key=lambda r: -r[key]):
                if c in r and r[c] > 0:
                    lines.append(f"{math.log10(r[key])!r} {math.log10(r[c])!r}")
            if len(lines) > 1:
                out[c] = "\n".join(lines) + "\n"
        return out


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_report(report: ConvergenceReport, out_dir, stem: str) -> dict:
    out_dir = Path(out_dir)
    write_atomic(out_dir / f"{stem}.csv", report.to_csv())
    summary = report.summary()
    write_atomic(out_dir / f"{stem}.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for col, text in report.plot_data().items():
        write_atomic(out_dir / f"{stem}_{col}.dat", text)
    return summary


# ---------------------------------------------------------------------------
# nested-mesh transfer


def locate(mesh: Mesh, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Triangle index and barycentric coordinates of points on a structured mesh."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    nx = mesh.nx
    i = np.clip(np.searchsorted(mesh.x_lines, x, side="right") - 1, 0, nx - 1)
    j = np.clip(np.searchsorted(mesh.y_lines, y, side="right") - 1, 0, len(mesh.y_lines) - 2)
    sx = (x - mesh.x_lines[i]) / (mesh.x_lines[i + 1] - mesh.x_lines[i])
    sy = (y - mesh.y_lines[j]) / (mesh.y_lines[j + 1] - mesh.y_lines[j])
    upper = sy > sx
    tri = 2 * (j * nx + i) + upper
    # lower-right (LL, LR, UR): x = LL + sx*dx, y = LL + sy*dy -> l1 = sx - sy, l2 = sy
    # upper-left  (LL, UR, UL): l1 = sx, l2 = sy - sx
    l1 = np.where(upper, sx, sx - sy)
    l2 = np.where(upper, sy - sx, sy)
    bary = np.column_stack([1.0 - l1 - l2, l1, l2])
    return tri, np.clip(bary, 0.0, 1.0)


def is_nested(coarse: Mesh, fine: Mesh, tol: float = 1e-12) -> bool:
    def subset(a, b):
        return all(np.min(np.abs(b - v)) <= tol for v in a)

    return subset(coarse.x_lines, fine.x_lines) and subset(coarse.y_lines, fine.y_lines)


def transfer_values(space: Space, coeffs, x, y) -> np.ndarray:
    """Evaluate a field of ``space`` at arbitrary points (n, C)."""
    tri, bary = locate(space.mesh, x, y)
    loc = space.tri_local[tri]
    if np.any(loc < 0):
        raise ValueError("points outside the field's region")
    N = eval_shape(space.kind, bary)  # (n, nloc)
    cd = space.cell_dofs[loc]
    cc = np.asarray(coeffs).reshape(space.components, space.n_scalar)[:, cd]  # (C, n, nloc)
    return np.einsum("pn,cpn->pc", N, cc)


def self_convergence(fields, reference, degree: int = NORM_DEGREE) -> list[float]:
    """L2 differences of coarse fields against a reference field, integrated on the reference mesh.

    ``fields`` and ``reference`` are ``(space, coeffs)`` pairs or :class:`FEField`.
    """
    ref_space, ref_coeffs = (reference.space, reference.coeffs) if isinstance(reference, FEField) else reference
    out = []
    for f in fields:
        space, coeffs = (f.space, f.coeffs) if isinstance(f, FEField) else f
        if not is_nested(space.mesh, ref_space.mesh):
            raise ValueError("coarse and reference meshes are not nested")

        def coarse_fn(x, y, t, space=space, coeffs=coeffs):
            return transfer_values(space, coeffs, x, y)

        out.append(error_norm((ref_space, ref_coeffs), coarse_fn, None, "L2", 0.0, degree))
    return out
