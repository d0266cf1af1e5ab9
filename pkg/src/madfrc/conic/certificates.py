"""Independent audit of solver outputs against the problem data.

Every check recomputes residuals from scratch (no solver internals), so a
passing report certifies the claimed status: feasibility and a small gap for
'optimal', an improving ray for 'infeasible'/'unbounded'.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cones import min_margin
from .problem import ConicProblem, ConicSolution


@dataclass
class CertificateReport:
    status: str
    ok: bool
    checks: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def check_certificates(problem: ConicProblem, solution: ConicSolution,
                       tol: float = 1e-6) -> CertificateReport:
    a, b, c, cones = problem.a, problem.b, problem.c, problem.cones
    anorm = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    checks: dict = {}
    failures: list = []

    def record(name: str, value: float, passed: bool):
        checks[name] = value
        if not passed:
            failures.append(name)

    if solution.status == "optimal":
        x, y, s = solution.x, solution.y, solution.s
        xm = min_margin(cones, x)
        sm = min_margin(cones, s)
        record("x_cone_margin", xm, xm >= -tol * (1.0 + float(np.max(np.abs(x)))))
        record("s_cone_margin", sm, sm >= -tol * (1.0 + float(np.max(np.abs(s)))))
        pres = float(np.linalg.norm(a @ x - b) / (1.0 + np.linalg.norm(b)))
        record("primal_residual", pres, pres <= tol)
        dres = float(np.linalg.norm(a.T @ y + s - c) / (1.0 + np.linalg.norm(c)))
        record("dual_residual", dres, dres <= tol)
        pobj, dobj = float(c @ x), float(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        record("gap", gap, gap <= tol)
    elif solution.status == "infeasible":
        cert = solution.certificate or {}
        if cert.get("kind") != "primal_infeasible":
            failures.append("missing_certificate")
        else:
            y, s = cert["y"], cert["s"]
            sm = min_margin(cones, s)
            record("ray_s_margin", sm, sm >= -tol * (1.0 + float(np.max(np.abs(s)))))
            impr = float(b @ y)
            record("ray_improvement", impr, impr > 0)
            res = float(np.linalg.norm(a.T @ y + s)
                        / (anorm * (1.0 + np.linalg.norm(y))))
            record("ray_residual", res, res <= tol)
    elif solution.status == "unbounded":
        cert = solution.certificate or {}
        if cert.get("kind") != "dual_infeasible":
            failures.append("missing_certificate")
        else:
            x = cert["x"]
            xm = min_margin(cones, x)
            record("ray_x_margin", xm, xm >= -tol * (1.0 + float(np.max(np.abs(x)))))
            impr = float(c @ x)
            record("ray_improvement", impr, impr < 0)
            res = float(np.linalg.norm(a @ x)
                        / (anorm * (1.0 + np.linalg.norm(x))))
            record("ray_residual", res, res <= tol)
    else:
        failures.append(f"status_{solution.status}_not_certifiable")

    return CertificateReport(status=solution.status, ok=not failures,
                             checks=checks, failures=failures)
