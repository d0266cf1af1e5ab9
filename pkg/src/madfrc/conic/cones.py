"""Cone arithmetic: vectorization, Jordan products, NT scalings, step lengths.

Symmetric matrices travel through the solver in scaled-vector form: the upper
triangle read row by row, off-diagonal entries multiplied by sqrt(2), so the
Euclidean inner product of two vectorized matrices equals the Frobenius inner
product of the matrices.

The Nesterov-Todd scaling for each cone is represented so that the scaled
primal and dual points coincide: lam = W^{-T} x = W s.  For semidefinite
blocks W acts by congruence, W(S) = R' S R, and the scaled point is the
diagonal matrix of singular values from the similarity construction; the
heavy operators Theta = W' W and its inverse act as congruences by R R' and
its inverse, so nothing of size veclen^2 is ever materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Cone:
    """One cone block: kind in {'nonneg', 'soc', 'psd'}.

    ``size`` is the vector dimension for nonneg/soc blocks and the matrix
    side for psd blocks.
    """

    kind: str
    size: int

    def __post_init__(self):
        if self.kind not in ("nonneg", "soc", "psd"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.size < 1:
            raise ValueError(f"cone size must be >= 1, got {self.size}")
        if self.kind == "soc" and self.size < 2:
            raise ValueError("second-order cone needs dimension >= 2")

    @property
    def veclen(self) -> int:
        if self.kind == "psd":
            return self.size * (self.size + 1) // 2
        return self.size

    @property
    def degree(self) -> int:
        """Contribution to the barrier degree (soc blocks count once)."""
        if self.kind == "nonneg":
            return self.size
        if self.kind == "soc":
            return 1
        return self.size


def svec(mat: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorization preserving inner products."""
    p = mat.shape[0]
    iu = np.triu_indices(p)
    weights = np.where(iu[0] == iu[1], 1.0, SQRT2)
    return np.asarray(mat)[iu] * weights


def smat(vec: np.ndarray, side: int) -> np.ndarray:
    """Inverse of ``svec``."""
    iu = np.triu_indices(side)
    weights = np.where(iu[0] == iu[1], 1.0, 1.0 / SQRT2)
    vals = np.asarray(vec) * weights
    out = np.zeros((side, side), dtype=vals.dtype)
    out[iu] = vals
    out.T[iu] = out[iu]
    return out


def svec_rows(mats: np.ndarray) -> np.ndarray:
    """``svec`` applied to a stack of matrices, shape (r, p, p) -> (r, veclen)."""
    p = mats.shape[-1]
    iu = np.triu_indices(p)
    weights = np.where(iu[0] == iu[1], 1.0, SQRT2)
    return mats[:, iu[0], iu[1]] * weights


def smat_rows(vecs: np.ndarray, side: int) -> np.ndarray:
    """``smat`` applied to a stack of vectors, shape (r, veclen) -> (r, side, side)."""
    iu = np.triu_indices(side)
    weights = np.where(iu[0] == iu[1], 1.0, 1.0 / SQRT2)
    vals = np.asarray(vecs) * weights
    out = np.zeros((vecs.shape[0], side, side), dtype=vals.dtype)
    out[:, iu[0], iu[1]] = vals
    out[:, iu[1], iu[0]] = vals
    return out


def cone_slices(cones: list[Cone]) -> list[slice]:
    out, at = [], 0
    for cone in cones:
        out.append(slice(at, at + cone.veclen))
        at += cone.veclen
    return out


def total_veclen(cones: list[Cone]) -> int:
    return sum(c.veclen for c in cones)


def total_degree(cones: list[Cone]) -> int:
    return sum(c.degree for c in cones)


def identity_point(cones: list[Cone]) -> np.ndarray:
    """Concatenated identity elements: the interior starting point."""
    parts = []
    for cone in cones:
        if cone.kind == "psd":
            parts.append(svec(np.eye(cone.size)))
        elif cone.kind == "soc":
            e = np.zeros(cone.size)
            e[0] = 1.0
            parts.append(e)
        else:
            parts.append(np.ones(cone.size))
    return np.concatenate(parts)


def min_margin(cones: list[Cone], vec: np.ndarray) -> float:
    """Smallest cone eigenvalue across blocks; > 0 means strict interior."""
    worst = math.inf
    for cone, sl in zip(cones, cone_slices(cones)):
        v = vec[sl]
        if cone.kind == "nonneg":
            worst = min(worst, float(v.min()))
        elif cone.kind == "soc":
            worst = min(worst, float(v[0] - np.linalg.norm(v[1:])))
        else:
            worst = min(worst, float(np.linalg.eigvalsh(smat(v, cone.size))[0]))
    return worst


def product_min_eig(cones: list[Cone], x: np.ndarray, s: np.ndarray) -> float:
    """Smallest eigenvalue of P(x^{1/2})s across blocks.

    Centrality measure for step control: strictly positive iff both points are
    strictly interior (unlike the symmetrized Jordan product x o s, whose
    PSD-block eigenvalues can dip negative for healthy non-commuting pairs).
    Returns -inf when x itself is not strictly interior.
    """
    worst = math.inf
    for cone, sl in zip(cones, cone_slices(cones)):
        xb, sb = x[sl], s[sl]
        if cone.kind == "nonneg":
            if xb.size:
                worst = min(worst, float(np.min(xb * sb)))
        elif cone.kind == "soc":
            x0, x1 = float(xb[0]), xb[1:]
            n1 = float(np.linalg.norm(x1))
            if x0 <= 0.0 or x0 - n1 <= 0.0:
                return -math.inf
            sp, sm = math.sqrt(x0 + n1), math.sqrt(x0 - n1)
            u0 = 0.5 * (sp + sm)
            u1 = (0.5 * (sp - sm) / n1) * x1 if n1 > 0 else np.zeros_like(x1)
            dot_us = u0 * sb[0] + float(u1 @ sb[1:])
            det_u = sp * sm
            w0 = 2.0 * dot_us * u0 - det_u * sb[0]
            w1 = 2.0 * dot_us * u1 + det_u * sb[1:]
            worst = min(worst, w0 - float(np.linalg.norm(w1)))
        else:
            try:
                low = np.linalg.cholesky(smat(xb, cone.size))
            except np.linalg.LinAlgError:
                return -math.inf
            inner = low.T @ smat(sb, cone.size) @ low
            worst = min(worst, float(np.linalg.eigvalsh(inner)[0]))
    return worst


def _arrow_mul(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    out[0] = u @ v
    out[1:] = u[0] * v[1:] + v[0] * u[1:]
    return out


def _arrow_solve(lam: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve lam o u = d for a second-order-cone point lam."""
    det = lam[0] ** 2 - lam[1:] @ lam[1:]
    out = np.empty_like(d)
    out[0] = (lam[0] * d[0] - lam[1:] @ d[1:]) / det
    out[1:] = (d[1:] - out[0] * lam[1:]) / lam[0]
    return out


def jordan_mul(cones: list[Cone], u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Blockwise Jordan product (elementwise / arrow / symmetrized matrix)."""
    out = np.empty_like(u)
    for cone, sl in zip(cones, cone_slices(cones)):
        if cone.kind == "nonneg":
            out[sl] = u[sl] * v[sl]
        elif cone.kind == "soc":
            out[sl] = _arrow_mul(u[sl], v[sl])
        else:
            a = smat(u[sl], cone.size)
            b = smat(v[sl], cone.size)
            out[sl] = svec(0.5 * (a @ b + b @ a))
    return out


class Scaling:
    """Nesterov-Todd scaling state for one interior pair (x, s)."""

    def __init__(self, cones: list[Cone], x: np.ndarray, s: np.ndarray):
        self.cones = cones
        self.slices = cone_slices(cones)
        self.blocks = []
        lam_parts = []
        for cone, sl in zip(cones, self.slices):
            xb, sb = x[sl], s[sl]
            if cone.kind == "nonneg":
                if np.any(xb <= 0) or np.any(sb <= 0):
                    raise ArithmeticError("nonnegative point left the interior")
                w = np.sqrt(xb / sb)
                lam = np.sqrt(xb * sb)
                self.blocks.append(("nonneg", w))
            elif cone.kind == "soc":
                jx = xb[0] ** 2 - xb[1:] @ xb[1:]
                js = sb[0] ** 2 - sb[1:] @ sb[1:]
                if jx <= 0 or js <= 0:
                    raise ArithmeticError("second-order point left the interior")
                nx, ns = math.sqrt(jx), math.sqrt(js)
                xbar, sbar = xb / nx, sb / ns
                gamma = math.sqrt((1.0 + xbar @ sbar) / 2.0)
                wbar = np.empty_like(xb)
                wbar[0] = (xbar[0] + sbar[0]) / (2.0 * gamma)
                wbar[1:] = (xbar[1:] - sbar[1:]) / (2.0 * gamma)
                # the reflector built from wbar is the square W^2; take the
                # Jordan square root (unit J-norm again) so that W s = W^{-1} x
                vbar = wbar.copy()
                vbar[0] += 1.0
                vbar /= math.sqrt(2.0 * (wbar[0] + 1.0))
                eta = math.sqrt(nx / ns)
                self.blocks.append(("soc", (eta, vbar)))
                lam = self._soc_apply_inv(eta, vbar, xb)
            else:
                xm = smat(xb, cone.size)
                sm = smat(sb, cone.size)
                l1 = np.linalg.cholesky(xm)
                l2 = np.linalg.cholesky(sm)
                u_svd, sig, vt = np.linalg.svd(l2.T @ l1)
                if sig[-1] <= 0:
                    raise ArithmeticError("semidefinite point left the interior")
                isq = 1.0 / np.sqrt(sig)
                r = l1 @ vt.T @ np.diag(isq)
                rinv = np.diag(isq) @ u_svd.T @ l2.T
                q = r @ r.T
                qinv = rinv.T @ rinv
                self.blocks.append(("psd", (r, rinv, q, qinv, sig)))
                lam = svec(np.diag(sig))
            lam_parts.append(lam)
        self.lam = np.concatenate(lam_parts)

    @staticmethod
    def _soc_apply(eta, wbar, v):
        # W v = eta * (2 wbar (wbar' v) - J v)
        jv = np.empty_like(v)
        jv[0] = v[0]
        jv[1:] = -v[1:]
        return eta * (2.0 * wbar * (wbar @ v) - jv)

    @staticmethod
    def _soc_apply_inv(eta, wbar, v):
        # W^{-1} v = (1/eta) * (2 (J wbar) ((J wbar)' v) - J v)
        jw = np.empty_like(wbar)
        jw[0] = wbar[0]
        jw[1:] = -wbar[1:]
        jv = np.empty_like(v)
        jv[0] = v[0]
        jv[1:] = -v[1:]
        return (2.0 * jw * (jw @ v) - jv) / eta

    def apply_theta(self, v: np.ndarray) -> np.ndarray:
        """Theta = W' W; maps dual-side vectors to primal-side vectors."""
        out = np.empty_like(v)
        for (kind, data), sl, cone in zip(self.blocks, self.slices, self.cones):
            if kind == "nonneg":
                out[sl] = data ** 2 * v[sl]
            elif kind == "soc":
                eta, wbar = data
                out[sl] = self._soc_apply(eta, wbar, self._soc_apply(eta, wbar, v[sl]))
            else:
                _, _, q, _, _ = data
                out[sl] = svec(q @ smat(v[sl], cone.size) @ q)
        return out

    def theta_rows(self, rows: np.ndarray) -> np.ndarray:
        """``apply_theta`` over a stack of vectors, one per row of ``rows``.

        Identical arithmetic to the per-vector path, batched per cone block so
        building A Theta A' costs a handful of array ops instead of one python
        call chain per constraint row.
        """
        out = np.empty_like(rows)
        for (kind, data), sl, cone in zip(self.blocks, self.slices, self.cones):
            v = rows[:, sl]
            if kind == "nonneg":
                out[:, sl] = v * data ** 2
            elif kind == "soc":
                eta, wbar = data
                for _ in range(2):
                    jv = v.copy()
                    jv[:, 1:] = -jv[:, 1:]
                    v = eta * (2.0 * np.outer(v @ wbar, wbar) - jv)
                out[:, sl] = v
            else:
                q = data[2]
                mats = smat_rows(v, cone.size)
                out[:, sl] = svec_rows(q[None] @ mats @ q[None])
        return out

    def apply_theta_inv(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        for (kind, data), sl, cone in zip(self.blocks, self.slices, self.cones):
            if kind == "nonneg":
                out[sl] = v[sl] / data ** 2
            elif kind == "soc":
                eta, wbar = data
                out[sl] = self._soc_apply_inv(eta, wbar,
                                              self._soc_apply_inv(eta, wbar, v[sl]))
            else:
                _, _, _, qinv, _ = data
                out[sl] = svec(qinv @ smat(v[sl], cone.size) @ qinv)
        return out

    def apply_w(self, v: np.ndarray) -> np.ndarray:
        """W itself (dual side): lam = W s."""
        out = np.empty_like(v)
        for (kind, data), sl, cone in zip(self.blocks, self.slices, self.cones):
            if kind == "nonneg":
                out[sl] = data * v[sl]
            elif kind == "soc":
                eta, wbar = data
                out[sl] = self._soc_apply(eta, wbar, v[sl])
            else:
                r, _, _, _, _ = data
                out[sl] = svec(r.T @ smat(v[sl], cone.size) @ r)
        return out

    def apply_w_inv_t(self, v: np.ndarray) -> np.ndarray:
        """W^{-T} (primal side): lam = W^{-T} x."""
        out = np.empty_like(v)
        for (kind, data), sl, cone in zip(self.blocks, self.slices, self.cones):
            if kind == "nonneg":
                out[sl] = v[sl] / data
            elif kind == "soc":
                eta, wbar = data
                out[sl] = self._soc_apply_inv(eta, wbar, v[sl])
            else:
                _, rinv, _, _, _ = data
                out[sl] = svec(rinv @ smat(v[sl], cone.size) @ rinv.T)
        return out

    def apply_w_inv(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        for (kind, data), sl, cone in zip(self.blocks, self.slices, self.cones):
            if kind == "nonneg":
                out[sl] = v[sl] / data
            elif kind == "soc":
                eta, wbar = data
                out[sl] = self._soc_apply_inv(eta, wbar, v[sl])
            else:
                rinv = data[1]
                out[sl] = svec(rinv.T @ smat(v[sl], cone.size) @ rinv)
        return out

    def lam_solve(self, d: np.ndarray) -> np.ndarray:
        """Solve lam o u = d blockwise against the scaled point."""
        out = np.empty_like(d)
        for (kind, data), sl, cone in zip(self.blocks, self.slices, self.cones):
            lam = self.lam[sl]
            if kind == "nonneg":
                out[sl] = d[sl] / lam
            elif kind == "soc":
                out[sl] = _arrow_solve(lam, d[sl])
            else:
                sig = data[4]
                dm = smat(d[sl], cone.size)
                out[sl] = svec(2.0 * dm / np.add.outer(sig, sig))
        return out


def max_step(cones: list[Cone], vec: np.ndarray, dvec: np.ndarray) -> float:
    """Largest alpha with vec + alpha * dvec still in the cone (can be inf)."""
    alpha = math.inf
    for cone, sl in zip(cones, cone_slices(cones)):
        v, d = vec[sl], dvec[sl]
        if cone.kind == "nonneg":
            neg = d < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-v[neg] / d[neg])))
        elif cone.kind == "soc":
            # roots of (v0 + a d0)^2 - ||v1 + a d1||^2 = 0, plus v0 + a d0 >= 0
            a = d[0] ** 2 - d[1:] @ d[1:]
            b = 2.0 * (v[0] * d[0] - v[1:] @ d[1:])
            c = v[0] ** 2 - v[1:] @ v[1:]
            best = math.inf
            if d[0] < 0:
                best = -v[0] / d[0]
            if abs(a) < 1e-300:
                if b < 0:
                    best = min(best, -c / b)
            else:
                disc = b * b - 4.0 * a * c
                if disc >= 0:
                    sq = math.sqrt(disc)
                    for root in ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)):
                        if root > 0:
                            best = min(best, root)
            alpha = min(alpha, best)
        else:
            vm = smat(v, cone.size)
            dm = smat(d, cone.size)
            try:
                low = np.linalg.cholesky(vm)
            except np.linalg.LinAlgError:
                return 0.0
            mid = sla.solve_triangular(low, dm, lower=True)
            mid = sla.solve_triangular(low, mid.T, lower=True)
            emin = float(np.linalg.eigvalsh(0.5 * (mid + mid.T))[0])
            if emin < 0:
                alpha = min(alpha, -1.0 / emin)
    return alpha
