"""Homogeneous self-dual interior-point method over symmetric cones.

The embedding solves

    A x = b tau,   A' y + s = c tau,   c' x - b' y + kappa = 0,
    x, s in K,     tau, kappa >= 0,

whose strictly complementary solutions encode an optimum (tau > 0), a
certificate of infeasibility, or one of unboundedness (kappa > 0).  Search
directions come from Nesterov-Todd scaling with a Mehrotra
predictor-corrector; each iteration factors one m-by-m Schur complement and
reuses it for the predictor, the corrector, and the constant tau column.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .cones import (Scaling, identity_point, jordan_mul, max_step,
                    product_min_eig, total_degree)
from .problem import ConicProblem, ConicSolution, dump_problem


def _factor_schur(schur: np.ndarray):
    """Cholesky with escalating diagonal jitter; least-squares fallback."""
    jitter = 0.0
    base = max(float(np.trace(schur)) / max(schur.shape[0], 1), 1e-300)
    for attempt in range(4):
        try:
            cho = sla.cho_factor(schur + jitter * np.eye(schur.shape[0]), lower=True)
            return lambda rhs: sla.cho_solve(cho, rhs)
        except np.linalg.LinAlgError:
            jitter = base * (1e-12 if attempt == 0 else jitter / base * 100.0)
    return lambda rhs: np.linalg.lstsq(schur, rhs, rcond=None)[0]


def _chol_ld(mat: np.ndarray) -> np.ndarray:
    """Unblocked Cholesky; numpy.linalg has no longdouble support."""
    size = mat.shape[0]
    low = np.zeros_like(mat)
    for j in range(size):
        diag = mat[j, j] - low[j, :j] @ low[j, :j]
        if diag <= 0.0:
            raise np.linalg.LinAlgError("not positive definite")
        low[j, j] = np.sqrt(diag)
        if j + 1 < size:
            low[j + 1:, j] = (mat[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def _factor_schur_ld(schur: np.ndarray):
    """Extended-precision twin of _factor_schur for the final iterations.

    Near convergence cond(S) reaches 1/mu^2 ~ 1e16..1e18, where double
    precision can no longer produce directions whose KKT rows hold to tol;
    80-bit arithmetic keeps the refinement contraction factor cond*eps well
    below one all the way down.
    """
    jitter = np.longdouble(0.0)
    base = np.longdouble(max(float(np.trace(schur.astype(float)))
                             / max(schur.shape[0], 1), 1e-300))
    eye = np.eye(schur.shape[0], dtype=schur.dtype)
    for attempt in range(4):
        try:
            low = _chol_ld(schur + jitter * eye)
        except np.linalg.LinAlgError:
            jitter = base * np.longdouble(1e-18) if attempt == 0 else jitter * 100.0
            continue

        def solve_ld(rhs, low=low):
            size = low.shape[0]
            z = np.array(rhs, dtype=low.dtype)
            for i in range(size):
                z[i] = (z[i] - low[i, :i] @ z[:i]) / low[i, i]
            for i in range(size - 1, -1, -1):
                z[i] = (z[i] - low[i + 1:, i] @ z[i + 1:]) / low[i, i]
            return z

        return solve_ld
    dbl = schur.astype(float)
    return lambda rhs: np.linalg.lstsq(dbl, np.asarray(rhs, dtype=float),
                                       rcond=None)[0]


def solve(problem: ConicProblem, tol: float = 1e-8, max_iter: int = 200,
          verbose: bool = False, dump_path=None) -> ConicSolution:
    """Solve the conic program; statuses: optimal | infeasible | unbounded | max_iter."""
    if dump_path is not None:
        dump_problem(problem, dump_path)
    a, b, c, cones = problem.a, problem.b, problem.c, problem.cones
    m, n = a.shape
    nu = total_degree(cones) + 1
    e_vec = identity_point(cones)
    x = e_vec.copy()
    s = e_vec.copy()
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0
    bnorm = 1.0 + np.linalg.norm(b)
    cnorm = 1.0 + np.linalg.norm(c)
    anorm = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    a_ld = b_ld = c_ld = None  # extended-precision copies, made on demand

    best = None
    best_score = math.inf
    mark_score, mark_iter = math.inf, 0
    status = "max_iter"
    certificate = None
    iterations = 0

    for iterations in range(max_iter + 1):
        r_p = a @ x - b * tau
        r_d = a.T @ y + s - c * tau
        r_g = float(c @ x - b @ y + kappa)
        mu = (x @ s + tau * kappa) / nu

        xt, yt, st = x / tau, y / tau, s / tau
        pres = np.linalg.norm(a @ xt - b) / bnorm
        dres = np.linalg.norm(a.T @ yt + st - c) / cnorm
        pobj = float(c @ xt)
        dobj = float(b @ yt)
        scale = 1.0 + abs(pobj) + abs(dobj)
        gap_rel = abs(pobj - dobj) / scale
        compl = float(x @ s) / tau ** 2 / scale
        score = max(pres, dres, min(gap_rel, compl))
        if score < best_score:
            best_score = score
            best = (xt.copy(), yt.copy(), st.copy(), pobj, dobj, gap_rel,
                    pres, dres, tau, kappa)
        if verbose:
            print(f"iter {iterations:3d}  mu {mu:9.2e}  pres {pres:9.2e}  "
                  f"dres {dres:9.2e}  gap {gap_rel:9.2e}  tau {tau:9.2e}")
        if pres <= tol and dres <= tol and min(gap_rel, compl) <= tol:
            status = "optimal"
            best = (xt.copy(), yt.copy(), st.copy(), pobj, dobj, gap_rel,
                    pres, dres, tau, kappa)
            break

        b_y = float(b @ y)
        if b_y > 0:
            y_ray, s_ray = y / b_y, s / b_y
            if (np.linalg.norm(a.T @ y_ray + s_ray)
                    <= tol * anorm * (1.0 + np.linalg.norm(y_ray))):
                status = "infeasible"
                certificate = {"kind": "primal_infeasible", "y": y_ray, "s": s_ray}
                break
        c_x = float(c @ x)
        if c_x < 0:
            x_ray = x / (-c_x)
            if np.linalg.norm(a @ x_ray) <= tol * anorm * (1.0 + np.linalg.norm(x_ray)):
                status = "unbounded"
                certificate = {"kind": "dual_infeasible", "x": x_ray}
                break
        if iterations == max_iter:
            break
        if score < 0.5 * mark_score:
            mark_score, mark_iter = score, iterations
        elif iterations - mark_iter >= 10:
            break  # floored: residual score has not halved in 10 iterations

        try:
            w = Scaling(cones, x, s)
        except (ArithmeticError, np.linalg.LinAlgError):
            break

        # the last decades before tol need extended precision: cond(S) grows
        # like 1/mu^2, and past ~1e16 double-precision directions carry KKT
        # row errors above tol no matter how the system is refined.  A loose
        # tol never reaches that regime, so skip the slow path entirely.
        use_ld = mu < 1e-5 and tol <= 1e-8
        if use_ld and a_ld is None:
            a_ld = a.astype(np.longdouble)
            b_ld = b.astype(np.longdouble)
            c_ld = c.astype(np.longdouble)
        aw, bw, cw = (a_ld, b_ld, c_ld) if use_ld else (a, b, c)
        work_dt = np.longdouble if use_ld else np.float64

        theta_at = w.theta_rows(aw).T
        schur = aw @ theta_at
        schur = 0.5 * (schur + schur.T)
        if not m:
            base_solve = lambda rhs: rhs
        elif use_ld:
            base_solve = _factor_schur_ld(schur)
        else:
            base_solve = _factor_schur(schur)

        def solve_schur(rhs):
            # iterative refinement against the factored matrix: a bare
            # factored solve leaves a cond(S)*eps residual that floors the
            # primal residual near convergence
            sol = base_solve(rhs)
            for _ in range(2):
                upd = sol + base_solve(rhs - schur @ sol)
                if not np.all(np.isfinite(upd)):
                    break
                sol = upd
            return sol
        theta_c = w.apply_theta(cw)
        a_theta_c = aw @ theta_c

        y2 = solve_schur(a_theta_c + bw) if m else np.zeros(0)
        x2 = w.apply_theta(aw.T @ y2 - cw)

        zero_n = np.zeros(n)

        def _dirs(rd_rhs, rp_rhs, rg_rhs, v, d_t, refine):
            # linearized rows:  A'dy + ds - c dtau = rd_rhs
            #                   A dx - b dtau      = rp_rhs
            #                   c'dx - b'dy + dkappa = rg_rhs
            #                   W^{-T}dx + W ds    = v
            #                   kappa dtau + tau dkappa = d_t
            wiv = w.apply_w_inv(np.asarray(v, dtype=work_dt))
            h = wiv - rd_rhs
            y1 = solve_schur(rp_rhs - aw @ w.apply_theta(h)) if m else np.zeros(0)
            x1 = w.apply_theta(aw.T @ y1 + h)
            den = cw @ x2 - bw @ y2 - kappa / tau
            num = rg_rhs - cw @ x1 + bw @ y1 - d_t / tau
            dtau = num / den if abs(den) > 1e-300 else work_dt(0.0)
            dx = x1 + dtau * x2
            dy = y1 + dtau * y2
            dkappa = (d_t - kappa * dtau) / tau
            # recover ds from the dual row: algebraically identical to the
            # scaled-space expression but immune to the 1/mu conditioning of
            # Theta^{-1} near convergence
            ds = rd_rhs + cw * dtau - aw.T @ dy
            if refine > 0:
                # refine against the uneliminated rows evaluated with the
                # original data: forming A Theta A' squares cond(Theta), and
                # that formation error stalls the last decade before tol
                res_p = rp_rhs - (aw @ dx - bw * dtau)
                res_g = rg_rhs - (cw @ dx - bw @ dy + dkappa)
                res_v = v - (w.apply_w_inv_t(dx) + w.apply_w(ds))
                cx, cy, cs, ct, ck = _dirs(zero_n, res_p, res_g, res_v,
                                           0.0, refine - 1)
                dx, dy, ds = dx + cx, dy + cy, ds + cs
                dtau, dkappa = dtau + ct, dkappa + ck
            return dx, dy, ds, dtau, dkappa

        def directions(rd_rhs, rp_rhs, rg_rhs, v, d_t, refine=2 if tol <= 1e-7 else 1):
            dx, dy, ds, dtau, dkappa = _dirs(rd_rhs, rp_rhs, rg_rhs, v,
                                             d_t, refine)
            return (np.asarray(dx, dtype=float), np.asarray(dy, dtype=float),
                    np.asarray(ds, dtype=float), float(dtau), float(dkappa))

        # predictor: aim at the pure Newton target (v = -lam solves
        # lam o v = -lam o lam exactly)
        lam_sq = jordan_mul(cones, w.lam, w.lam)
        dxa, dya, dsa, dta, dka = directions(-r_d, -r_p, -r_g, -w.lam, -tau * kappa)
        alpha_a = min(max_step(cones, x, dxa), max_step(cones, s, dsa), 1.0)
        if dta < 0:
            alpha_a = min(alpha_a, -tau / dta)
        if dka < 0:
            alpha_a = min(alpha_a, -kappa / dka)
        mu_aff = (((x + alpha_a * dxa) @ (s + alpha_a * dsa)
                   + (tau + alpha_a * dta) * (kappa + alpha_a * dka)) / nu)
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))

        # corrector: recenter and compensate the predictor's curvature
        corr = jordan_mul(cones, w.apply_w_inv_t(dxa), w.apply_w(dsa))
        d_c = -lam_sq - corr + sigma * mu * e_vec
        d_t = -tau * kappa - dta * dka + sigma * mu
        dx, dy, ds, dtau, dkappa = directions(-r_d, -r_p, -r_g, w.lam_solve(d_c), d_t)

        alpha_max = min(max_step(cones, x, dx), max_step(cones, s, ds))
        if dtau < 0:
            alpha_max = min(alpha_max, -tau / dtau)
        if dkappa < 0:
            alpha_max = min(alpha_max, -kappa / dkappa)
        alpha = min(1.0, 0.99 * alpha_max)
        if verbose and int(verbose) > 1:
            print(f"      aff {alpha_a:9.2e}  sigma {sigma:9.2e}  "
                  f"ax {max_step(cones, x, dx):9.2e}  "
                  f"as {max_step(cones, s, ds):9.2e}  alpha {alpha:9.2e}")
        if alpha < 1e-10 or not np.isfinite(alpha):
            break
        # wide-neighborhood guard: back alpha off until the trial point keeps
        # min eig(P(x^1/2)s) >= 1e-3 mu, else one corrector overshoot can park
        # the iterate on the boundary and strangle every later step
        for _ in range(30):
            xn = x + alpha * dx
            sn = s + alpha * ds
            tau_n = tau + alpha * dtau
            kappa_n = kappa + alpha * dkappa
            mu_n = (xn @ sn + tau_n * kappa_n) / nu
            if mu_n > 0 and tau_n > 0 and kappa_n > 0:
                prod_min = min(product_min_eig(cones, xn, sn), tau_n * kappa_n)
                if prod_min >= 1e-3 * mu_n:
                    break
            alpha *= 0.8
        x, s = xn, sn
        y = y + alpha * dy
        tau, kappa = tau_n, kappa_n

    xt, yt, st, pobj, dobj, gap_rel, pres, dres, tau_r, kappa_r = best
    if status in ("infeasible", "unbounded"):
        pobj, dobj = math.nan, math.nan
    return ConicSolution(status=status, x=xt, y=yt, s=st, obj_primal=pobj,
                         obj_dual=dobj, gap=gap_rel, res_primal=pres,
                         res_dual=dres, iterations=iterations, tau=tau_r,
                         kappa=kappa_r, certificate=certificate)
