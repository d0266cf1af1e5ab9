"""Self-contained primal-dual conic solver over nonneg/SOC/PSD products."""

from .certificates import CertificateReport, check_certificates
from .cones import Cone, smat, svec
from .problem import (ConicProblem, ConicSolution, ProblemBuilder, dump_problem,
                      load_problem)
from .solver import solve

__all__ = [
    "CertificateReport",
    "check_certificates",
    "Cone",
    "ConicProblem",
    "ConicSolution",
    "ProblemBuilder",
    "dump_problem",
    "load_problem",
    "smat",
    "svec",
    "solve",
]
