"""Problem/solution containers, assembly helper, and the debug dump format.

Standard form:

    minimize    c' x
    subject to  A x = b,   x in K,

where K is a product of nonnegative, second-order, and vectorized
semidefinite blocks in the declared order.

The dump format is line-oriented text: a version header, dimensions, the
cone list as ``kind:size`` tokens, then c, b, and the rows of A with floats
written via repr so a dump/load round trip is bitwise exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cones import Cone, cone_slices, min_margin, total_veclen


@dataclass
class ConicProblem:
    c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    cones: list[Cone]

    def __post_init__(self):
        self.c = np.ascontiguousarray(self.c, dtype=float)
        self.a = np.ascontiguousarray(self.a, dtype=float)
        self.b = np.ascontiguousarray(self.b, dtype=float)
        n = total_veclen(self.cones)
        if self.c.shape != (n,):
            raise ValueError(f"c has shape {self.c.shape}, cones imply n={n}")
        if self.a.ndim != 2 or self.a.shape[1] != n:
            raise ValueError(f"A has shape {self.a.shape}, expected (m, {n})")
        if self.b.shape != (self.a.shape[0],):
            raise ValueError(f"b has shape {self.b.shape}, A implies m={self.a.shape[0]}")
        for arr, name in ((self.c, "c"), (self.a, "A"), (self.b, "b")):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    @property
    def num_rows(self) -> int:
        return self.b.shape[0]


@dataclass
class ConicSolution:
    """Solver output; interpretation of x/y/s depends on status.

    For status 'optimal' they are the scaled primal/dual solution.  For
    'infeasible' the certificate dict carries the dual improving ray, for
    'unbounded' the primal ray.  'max_iter' returns the best scaled iterate.
    """

    status: str
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    obj_primal: float
    obj_dual: float
    gap: float
    res_primal: float
    res_dual: float
    iterations: int
    tau: float
    kappa: float
    certificate: dict | None = None


@dataclass
class _Var:
    name: str
    kind: str
    size: int
    sl: slice


class ProblemBuilder:
    """Incremental assembly of a ConicProblem with named variable blocks."""

    def __init__(self):
        self._vars: list[_Var] = []
        self._by_name: dict[str, _Var] = {}
        self._rows: list[np.ndarray] = []
        self._rhs: list[float] = []
        self._n = 0
        self._obj: list[tuple[slice, np.ndarray]] = []

    def _add(self, name: str, kind: str, size: int) -> slice:
        if name in self._by_name:
            raise ValueError(f"duplicate variable {name!r}")
        cone = Cone(kind, size)
        sl = slice(self._n, self._n + cone.veclen)
        var = _Var(name, kind, size, sl)
        self._vars.append(var)
        self._by_name[name] = var
        self._n += cone.veclen
        return sl

    def add_nonneg(self, name: str, dim: int = 1) -> slice:
        return self._add(name, "nonneg", dim)

    def add_soc(self, name: str, dim: int) -> slice:
        return self._add(name, "soc", dim)

    def add_psd(self, name: str, side: int) -> slice:
        return self._add(name, "psd", side)

    def slot(self, name: str) -> slice:
        return self._by_name[name].sl

    def new_row(self) -> np.ndarray:
        return np.zeros(self._n)

    def add_eq(self, row: np.ndarray, rhs: float) -> None:
        if row.shape != (self._n,):
            raise ValueError("row was created before later variables; rebuild it")
        self._rows.append(row)
        self._rhs.append(float(rhs))

    def add_objective(self, sl: slice, coeff: np.ndarray) -> None:
        self._obj.append((sl, np.asarray(coeff, dtype=float)))

    def build(self, equilibrate: bool = True):
        """Assemble, optionally scaling rows and objective to unit max entry.

        Returns (problem, info); info maps names to slices and records the
        objective scale so callers can undo it: original objective value =
        info['obj_scale'] * solved value.
        """
        cones = [Cone(v.kind, v.size) for v in self._vars]
        c = np.zeros(self._n)
        for sl, coeff in self._obj:
            c[sl] += coeff
        a = np.array(self._rows) if self._rows else np.zeros((0, self._n))
        b = np.array(self._rhs)
        row_scale = np.ones(len(self._rows))
        obj_scale = 1.0
        if equilibrate:
            for i in range(a.shape[0]):
                peak = np.max(np.abs(a[i]))
                if peak == 0.0:
                    raise ValueError(f"equality row {i} is identically zero")
                row_scale[i] = peak
                a[i] /= peak
                b[i] /= peak
            peak = np.max(np.abs(c)) if self._n else 0.0
            if peak > 0.0:
                obj_scale = peak
                c = c / peak
        info = {
            "slices": {v.name: v.sl for v in self._vars},
            "obj_scale": obj_scale,
            "row_scale": row_scale,
        }
        return ConicProblem(c=c, a=a, b=b, cones=cones), info


def solution_margins(problem: ConicProblem, x: np.ndarray) -> float:
    """Worst cone margin of x against the problem's cone list."""
    return min_margin(problem.cones, x)


def dump_problem(problem: ConicProblem, path) -> None:
    lines = ["# madfrc conic dump v1",
             f"m {problem.num_rows} n {problem.num_vars}",
             "cones " + " ".join(f"{c.kind}:{c.size}" for c in problem.cones),
             "c " + " ".join(repr(float(v)) for v in problem.c),
             "b " + " ".join(repr(float(v)) for v in problem.b)]
    for i in range(problem.num_rows):
        lines.append("A " + " ".join(repr(float(v)) for v in problem.a[i]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_problem(path) -> ConicProblem:
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.startswith("#")]
    header = lines[0].split()
    if header[0] != "m" or header[2] != "n":
        raise ValueError(f"bad dump header: {lines[0]!r}")
    m = int(header[1])
    tokens = lines[1].split()
    if tokens[0] != "cones":
        raise ValueError(f"bad cone line: {lines[1]!r}")
    cones = []
    for tok in tokens[1:]:
        kind, _, size = tok.partition(":")
        cones.append(Cone(kind, int(size)))
    c = np.array([float(v) for v in lines[2].split()[1:]])
    b = np.array([float(v) for v in lines[3].split()[1:]])
    rows = [np.array([float(v) for v in line.split()[1:]]) for line in lines[4:4 + m]]
    a = np.array(rows) if rows else np.zeros((0, c.shape[0]))
    return ConicProblem(c=c, a=a, b=b, cones=cones)
