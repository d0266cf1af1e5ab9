"""Block-coordinate ascent for the covert sum-rate design.

Outer loop alternates closed-form multiplier updates, a semidefinite
relaxation of the beamforming subproblem with exact rank-one recovery,
projected-gradient position updates with quadratic surrogate constraints,
and the receive-filter eigenvector step.  The objective is tracked in
natural-log units; reported rates are converted to bits.
"""

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import (objective_gradient, objective_value, steering_quadform_gradient,
                      steering_quadform_hessian_bound, steering_quadform_value,
                      steering_vector, user_channel_matrix)
from .config import SystemConfig
from .conic import ProblemBuilder, smat, solve, svec
from .covertness import solve_kappa
from .metrics import (covert_ratio, radar_snr, sum_log_rate_nats, sum_rate,
                      transmit_covariance, user_sinr, willie_powers)
from .scenario import ChannelSet


class InitializationError(ValueError):
    """Starting design violates a hard constraint; message names it."""


class BeamformingError(RuntimeError):
    """Beamforming subproblem failed to reach an acceptable solution."""


class AuditError(RuntimeError):
    """A returned design violates the feasibility tolerances."""


@dataclass
class TraceEntry:
    iteration: int
    objective: float        # sum log(1+sinr), nats
    rate: float             # bits per channel use
    snr: float              # radar output SNR under the sensing-only hypothesis
    ratio: float            # eta1 / eta0 at the warden


@dataclass
class DesignState:
    """All decision variables plus the per-iteration objective trace."""

    w: np.ndarray           # (N, K) beamformer columns
    r0: np.ndarray          # (N, N) Hermitian PSD radar covariance
    t: np.ndarray           # (N,) transmit positions, sorted
    r: np.ndarray           # (N,) receive positions, sorted
    u0: np.ndarray          # (N,) receive filter, sensing-only hypothesis
    u1: np.ndarray          # (N,) receive filter, joint hypothesis
    rho: np.ndarray         # (K,) rate multipliers
    upsilon: np.ndarray     # (K,) fractional-transform multipliers
    trace: list = field(default_factory=list)


@dataclass
class SurrogateCoefficients:
    """Fixed per-user data entering the beamforming subproblem."""

    weights: np.ndarray     # (K,) values 1 + rho_k
    upsilon: np.ndarray     # (K,)
    h: np.ndarray           # (N, K) channel columns at the current t
    outer: list             # K rank-one PSD matrices h_k h_k^H


def _grid_positions(config: SystemConfig) -> np.ndarray:
    """Half-wavelength grid centered in the placement segment."""
    n = config.num_antennas
    step = config.wavelength / 2.0
    span = (n - 1) * step
    start = (config.region_length - span) / 2.0
    return start + step * np.arange(n)


def lagrangian_value(w, r0, h, rho, noise_user) -> float:
    """Multiplier-form objective in nats; equals the sum rate at rho = sinr."""
    k = w.shape[1]
    gains = np.abs(h.conj().T @ w) ** 2
    sense = np.einsum("nk,nm,mk->k", h.conj(), r0, h).real
    total = 0.0
    for i in range(k):
        den = gains[i].sum() + sense[i] + noise_user
        total += (math.log1p(rho[i]) - rho[i]
                  + (1.0 + rho[i]) * gains[i, i] / den)
    return total


def update_rho(state: DesignState, channels: ChannelSet,
               config: SystemConfig) -> np.ndarray:
    """Stationary multipliers: each equals the user's current SINR."""
    h = user_channel_matrix(state.t, channels, config.wavelength)
    return user_sinr(state.w, state.r0, h, config.noise_user)


def update_upsilon(state: DesignState, channels: ChannelSet,
                   config: SystemConfig) -> np.ndarray:
    """Closed-form fractional multipliers sqrt(signal)/denominator."""
    h = user_channel_matrix(state.t, channels, config.wavelength)
    r_x = transmit_covariance(state.w, state.r0)
    k = state.w.shape[1]
    out = np.empty(k)
    for i in range(k):
        hk = h[:, i]
        sig = abs(hk.conj() @ state.w[:, i]) ** 2
        den = float(np.real(hk.conj() @ (r_x @ hk))) + config.noise_user
        out[i] = math.sqrt(sig) / den
    return out


def surrogate_coefficients(state: DesignState, channels: ChannelSet,
                           config: SystemConfig) -> SurrogateCoefficients:
    h = user_channel_matrix(state.t, channels, config.wavelength)
    outer = [np.outer(h[:, i], h[:, i].conj()) for i in range(h.shape[1])]
    return SurrogateCoefficients(weights=1.0 + np.asarray(state.rho, dtype=float),
                                 upsilon=np.asarray(state.upsilon, dtype=float),
                                 h=h, outer=outer)


# --- real embedding of Hermitian matrix variables -------------------------

def _embed(mat: np.ndarray) -> np.ndarray:
    """Real symmetric image [[Re, -Im], [Im, Re]] of a Hermitian matrix."""
    re, im = mat.real, mat.imag
    return np.block([[re, -im], [im, re]])


def _extract(mat: np.ndarray, n: int) -> np.ndarray:
    """Hermitian matrix recovered from a real 2N x 2N symmetric block.

    Averages the two diagonal copies and antisymmetrizes the off-diagonal
    coupling; for any feasible real block this symmetrization preserves
    every constraint built from embedded data and keeps the block PSD.
    """
    re = (mat[:n, :n] + mat[n:, n:]) / 2.0
    re = (re + re.T) / 2.0
    im = (mat[n:, :n] - mat[:n, n:]) / 2.0
    im = (im - im.T) / 2.0
    return re + 1j * im


def _form_row(mat: np.ndarray) -> np.ndarray:
    """svec row such that row . svec(Y) = Re<mat, X> for Y = embed(X)."""
    return svec(_embed(mat)) / 2.0


def build_sdr_subproblem(state: DesignState, channels: ChannelSet,
                         config: SystemConfig, kappa: float | None = None,
                         *, enforce_covertness: bool = True):
    """Assemble the relaxed beamforming subproblem as a cone program.

    Variables: per-user covariances, the total covariance, and a slack PSD
    block carrying the radar part; epigraph cones linearize the square-root
    signal terms with per-user channel normalization.  Hermitian matrix
    variables are embedded as real symmetric blocks of twice the side (all
    data rows land on the +/- structured subspace, so relaxing the block to
    a generic symmetric matrix is lossless).  Returns (problem, info); info
    carries slices and normalization constants for extraction.
    """
    if kappa is None:
        kappa = solve_kappa(config.covertness_level, config.detection_samples)
    n = config.num_antennas
    k = config.num_users
    coeffs = surrogate_coefficients(state, channels, config)
    a_t = steering_vector(state.t, channels.target.angle, config.wavelength)
    a_r = steering_vector(state.r, channels.target.angle, config.wavelength)
    # receive-side projection of the two-way response onto the filter
    v = a_t * (a_r.conj() @ state.u0)            # A^H u0 = a_t (a_r^H u0)

    builder = ProblemBuilder()
    side = 2 * n
    user_slots = [builder.add_psd(f"ru{i}", side) for i in range(k)]
    total_slot = builder.add_psd("rtot", side)
    radar_slot = builder.add_psd("rrad", side)
    epi_slots = [builder.add_soc(f"epi{i}", 3) for i in range(k)]
    snr_slack = builder.add_nonneg("snr_slack")
    power_slack = builder.add_nonneg("power_slack")
    covert_slack = builder.add_nonneg("covert_slack") if enforce_covertness else None

    hnorm = np.array([float(np.linalg.norm(coeffs.h[:, i])) for i in range(k)])

    # linking rows: total - sum(users) - radar = 0 per svec coordinate
    vec_len = side * (side + 1) // 2
    for j in range(vec_len):
        row = builder.new_row()
        row[total_slot][j] = 1.0
        for sl in user_slots:
            row[sl][j] = -1.0
        row[radar_slot][j] = -1.0
        builder.add_eq(row, 0.0)

    # epigraph rows: rotated-cone coordinates (q + 1/4, q - 1/4, s) per user
    for i in range(k):
        if hnorm[i] > 0.0:
            ht = coeffs.h[:, i] / hnorm[i]
            q_row = _form_row(np.outer(ht, ht.conj()))
        else:
            q_row = np.zeros(vec_len)
        for head, rhs in ((0, 0.25), (1, -0.25)):
            row = builder.new_row()
            row[epi_slots[i].start + head] = 1.0
            row[user_slots[i]] = -q_row
            builder.add_eq(row, rhs)

    # radar SNR: quadratic form of the radar block against A^H u0, lower
    # bound; the physical coefficients are rescaled to unit peak so the
    # unit slack coefficient cannot drown them during equilibration
    phys = config.reflection_gain * _form_row(np.outer(v, v.conj()))
    peak = max(float(np.abs(phys).max()), np.finfo(float).tiny)
    row = builder.new_row()
    row[radar_slot] = phys / peak
    row[snr_slack] = -1.0
    builder.add_eq(row, config.radar_snr_threshold * config.noise_radar
                   * float(np.vdot(state.u0, state.u0).real) / peak)

    # covertness: signal-plus-sensing power at the warden bounded by kappa
    # times the sensing-only power, cleared of the ratio; same rescaling
    if enforce_covertness:
        aa_row = config.willie_gain * _form_row(np.outer(a_t, a_t.conj()))
        peak = max(kappa * float(np.abs(aa_row).max()), np.finfo(float).tiny)
        row = builder.new_row()
        row[total_slot] = aa_row / peak
        row[radar_slot] = -kappa * aa_row / peak
        row[covert_slack] = 1.0
        builder.add_eq(row, (kappa - 1.0) * config.noise_willie / peak)

    # power: trace of the total covariance within budget
    row = builder.new_row()
    row[total_slot] = svec(np.eye(side)) / 2.0
    row[power_slack] = 1.0
    builder.add_eq(row, config.total_power)

    # objective (maximize): 2 (1+rho) upsilon ||h|| s_i  -  (1+rho) upsilon^2 h^H R h
    for i in range(k):
        coeff = np.zeros(3)
        coeff[2] = -2.0 * coeffs.weights[i] * coeffs.upsilon[i] * hnorm[i]
        builder.add_objective(epi_slots[i], coeff)
        builder.add_objective(total_slot, coeffs.weights[i] * coeffs.upsilon[i] ** 2
                              * _form_row(coeffs.outer[i]))

    problem, info = builder.build()
    info["hnorm"] = hnorm
    info["kappa"] = kappa
    info["side"] = side
    return problem, info


def relaxed_objective(r_total, r_users, h, rho, upsilon) -> float:
    """Direct evaluation of the relaxed subproblem objective (variable part)."""
    total = 0.0
    for i, rk in enumerate(r_users):
        hk = h[:, i]
        sig = max(float(np.real(hk.conj() @ (rk @ hk))), 0.0)
        den = float(np.real(hk.conj() @ (r_total @ hk)))
        total += (2.0 * (1.0 + rho[i]) * upsilon[i] * math.sqrt(sig)
                  - (1.0 + rho[i]) * upsilon[i] ** 2 * den)
    return total


def recover_rank_one(r_total, r_users, h, r_radar=None):
    """Closed-form rank-one beamformers from a relaxed solution.

    w_k = R_k h_k / sqrt(h_k^H R_k h_k); the per-user quadratic form is
    preserved exactly and R_k - w_k w_k^H stays PSD, so folding the
    leftovers into the radar part keeps every constraint satisfied.  When
    the radar block is passed explicitly the radar covariance is assembled
    as radar + sum(leftovers), which keeps it PSD to rounding error even
    when the relaxed blocks carry small linking residuals.  A vanishing
    signal form yields w_k = 0 and the whole block folds into the radar
    part.
    """
    n = r_total.shape[0]
    k = len(r_users)
    w = np.zeros((n, k), dtype=complex)
    leftover = []
    for i, rk in enumerate(r_users):
        hk = h[:, i]
        sig = float(np.real(hk.conj() @ (rk @ hk)))
        if sig <= 0.0:
            w[:, i] = 0.0
            leftover.append(rk)
            continue
        w[:, i] = (rk @ hk) / math.sqrt(sig)
        leftover.append(rk - np.outer(w[:, i], w[:, i].conj()))
    if r_radar is None:
        r0 = r_total - sum(np.outer(w[:, i], w[:, i].conj()) for i in range(k))
    else:
        r0 = r_radar + sum(leftover)
    r0 = (r0 + r0.conj().T) / 2.0
    return w, r0


def solve_beamforming(state: DesignState, channels: ChannelSet,
                      config: SystemConfig, kappa: float | None = None,
                      *, enforce_covertness: bool = True):
    """One beamforming block update: relax, solve, recover rank one.

    Returns (w, r0).  A small power overshoot from finite solver tolerance
    is repaired by a uniform scale-down, which can only loosen the
    covertness constraint and costs a negligible objective change.
    """
    problem, info = build_sdr_subproblem(state, channels, config, kappa,
                                         enforce_covertness=enforce_covertness)
    sol = solve(problem, tol=config.conic_tol, max_iter=config.conic_max_iter)
    acceptable = sol.status == "optimal" or (
        sol.status == "max_iter"
        and max(sol.res_primal, sol.res_dual, sol.gap) < 1e-6)
    if not acceptable:
        raise BeamformingError(f"beamforming subproblem ended with status "
                               f"{sol.status!r} (residuals {sol.res_primal:.2e}/"
                               f"{sol.res_dual:.2e}, gap {sol.gap:.2e})")
    n = config.num_antennas
    side = info["side"]
    slices = info["slices"]
    r_users = [_extract(smat(sol.x[slices[f"ru{i}"]], side), n)
               for i in range(config.num_users)]
    r_total = _extract(smat(sol.x[slices["rtot"]], side), n)
    r_radar = _extract(smat(sol.x[slices["rrad"]], side), n)
    h = surrogate_coefficients(state, channels, config).h
    w, r0 = recover_rank_one(r_total, r_users, h, r_radar)
    total = float(np.sum(np.abs(w) ** 2) + np.trace(r0).real)
    if total > config.total_power:
        scale = math.sqrt(config.total_power / total)
        w = w * scale
        r0 = r0 * scale ** 2
    return w, r0


# --- position updates -----------------------------------------------------

def _repair_chain(positions: np.ndarray, spacing: float,
                  region: float) -> np.ndarray:
    """Clip a near-feasible position vector onto the ordered chain exactly."""
    t = np.array(positions, dtype=float)
    n = len(t)
    for i in range(n):
        cap = region - (n - 1 - i) * spacing
        floor = 0.0 if i == 0 else t[i - 1] + spacing
        t[i] = min(max(t[i], floor), cap)
    return t


def _fd_hessian_norm(grad_fn, x: np.ndarray, eps: float = 1e-6) -> float:
    """Spectral norm of a centrally-differenced Hessian of a scalar field."""
    n = len(x)
    hess = np.empty((n, n))
    for i in range(n):
        xp = x.copy(); xp[i] += eps
        xm = x.copy(); xm[i] -= eps
        hess[i] = (grad_fn(xp) - grad_fn(xm)) / (2.0 * eps)
    hess = (hess + hess.T) / 2.0
    return float(np.max(np.abs(np.linalg.eigvalsh(hess)))) if n else 0.0


def _validated_delta(delta: float, grad_fn, x: np.ndarray, label: str) -> float:
    """Curvature bound checked against a sampled Hessian; doubled on failure."""
    sampled = _fd_hessian_norm(grad_fn, x)
    while delta < sampled * (1.0 - 1e-9):
        warnings.warn(f"{label}: analytic curvature bound {delta:.3e} below "
                      f"sampled Hessian norm {sampled:.3e}; doubling")
        delta = max(2.0 * delta, np.finfo(float).tiny)
    return delta


def compute_lipschitz_deltas(state: DesignState, channels: ChannelSet,
                             config: SystemConfig, kappa: float | None = None):
    """Curvature bounds for the radar-SNR and covertness surrogate rows.

    Both fields are steering-vector quadratic forms, so the bound sums
    per-entry amplitudes with the squared phase-gradient factor; each bound
    is validated against a finite-difference Hessian at the current t.
    """
    if kappa is None:
        kappa = solve_kappa(config.covertness_level, config.detection_samples)
    lam = config.wavelength
    angle = channels.target.angle
    a_r = steering_vector(state.r, angle, lam)
    unorm = float(np.vdot(state.u0, state.u0).real)
    c0 = config.reflection_gain * abs(np.vdot(state.u0, a_r)) ** 2 / (
        config.noise_radar * unorm)
    m0 = c0 * state.r0
    delta0 = steering_quadform_hessian_bound(angle, m0, lam)
    delta0 = _validated_delta(
        delta0, lambda t: steering_quadform_gradient(t, angle, m0, lam),
        state.t, "snr bound")
    r_x = transmit_covariance(state.w, state.r0)
    m1 = config.willie_gain * (r_x - kappa * state.r0)
    delta1 = steering_quadform_hessian_bound(angle, m1, lam)
    delta1 = _validated_delta(
        delta1, lambda t: steering_quadform_gradient(t, angle, m1, lam),
        state.t, "covertness bound")
    return delta0, delta1


def _trust_radius(value: float, grad, delta: float) -> float:
    """Largest displacement admitted by one quadratic surrogate row."""
    g = float(np.linalg.norm(grad))
    v = max(float(value), 0.0)
    d = max(float(delta), 1e-12)
    return max((g + math.sqrt(g * g + 2.0 * d * v)) / d, 1e-9)


_PROJECTION_TOL = 1e-6


def _build_projection(target: np.ndarray, config: SystemConfig, surrogates,
                      tol: float = _PROJECTION_TOL):
    """Projection of ``target`` onto the constrained position set.

    surrogates: list of (value, grad, delta, center) tuples encoding
    quadratic rows value + grad.(t - center) -/+ delta/2 ||t - center||^2
    with the required sense folded into the signs: each tuple demands
    value + grad.(t-center) - delta/2 ||t-center||^2 >= 0 after the caller
    normalizes bounds into the value.  Returns positions or None.
    """
    n = config.num_antennas
    # already-feasible targets are their own projection; skip the cone solve
    # (1e-12 absorbs representation noise in grid spacings, far inside the
    # 1e-9 residual the position audit allows)
    diffs = np.diff(target)
    if (target[0] >= -1e-12 and target[-1] <= config.region_length + 1e-12
            and (diffs >= config.min_spacing - 1e-12).all()
            and all(value + grad @ (target - center)
                    - 0.5 * delta * float((target - center) @ (target - center)) >= 0.0
                    for value, grad, delta, center in surrogates)):
        return target.copy()

    builder = ProblemBuilder()
    pos = builder.add_nonneg("pos", n)
    gap = builder.add_nonneg("gap", n)
    obj = builder.add_soc("obj", n + 1)
    quad_slots = [builder.add_soc(f"quad{j}", n + 2) for j in range(len(surrogates))]

    # spacing chain and region cap
    for i in range(1, n):
        row = builder.new_row()
        row[pos.start + i] = 1.0
        row[pos.start + i - 1] = -1.0
        row[gap.start + i] = -1.0
        builder.add_eq(row, config.min_spacing)
    row = builder.new_row()
    row[pos.start + n - 1] = 1.0
    row[gap.start] = 1.0
    builder.add_eq(row, config.region_length)

    # objective epigraph ||t - target||
    for i in range(n):
        row = builder.new_row()
        row[obj.start + 1 + i] = 1.0
        row[pos.start + i] = -1.0
        builder.add_eq(row, -target[i])
    coeff = np.zeros(n + 1)
    coeff[0] = 1.0
    builder.add_objective(obj, coeff)

    # quadratic surrogate rows as rotated cones; each cone is normalized by
    # the row's own trust radius so its solution coordinates stay O(1)
    # (unscaled, a binding row parks the cone at an ill-centered point and
    # the interior-point iteration crawls)
    for j, (value, grad, delta, center) in enumerate(surrogates):
        sl = quad_slots[j]
        radius = _trust_radius(value, grad, delta)
        scale = delta * radius ** 2
        scaled = np.asarray(grad, dtype=float) / scale
        const = value / scale - float(scaled @ center)
        for head, shift in ((0, 0.5), (1, -0.5)):
            row = builder.new_row()
            row[sl.start + head] = 1.0
            row[pos] = -scaled
            builder.add_eq(row, const + shift)
        for i in range(n):
            row = builder.new_row()
            row[sl.start + 2 + i] = 1.0
            row[pos.start + i] = -1.0 / radius
            builder.add_eq(row, -center[i] / radius)

    problem, info = builder.build()
    # displacement accuracy ~tol * trust radius suffices here: the ordering
    # chain is repaired exactly below and the quadratic rows are majorants
    # with slack, so the projection never needs the SDR's tight tolerance
    sol = solve(problem, tol=tol, max_iter=config.conic_max_iter)
    acceptable = sol.status == "optimal" or (
        sol.status == "max_iter"
        and max(sol.res_primal, sol.res_dual, sol.gap) < 10 * tol)
    if not acceptable:
        return None
    out = _repair_chain(sol.x[info["slices"]["pos"]], config.min_spacing,
                        config.region_length)
    return out


def _pgd_ascent(x0: np.ndarray, value_fn, grad_fn, project_fn,
                config: SystemConfig, radius_fn=None):
    """Monotone accelerated projected-gradient ascent.

    Gradient step with backtracking (shrink 0.5, ascent constant 1e-4, at
    most 30 halvings), projection through the conic solver, then
    extrapolation with the standard momentum recursion seeded at 0.1;
    extrapolated bases that fail to ascend fall back to the last accepted
    point.  The first backtracking step is capped so the target lands near
    the surrogate trust boundary (radius_fn), which skips the halvings a
    unit step would burn re-projecting onto the same tiny trust region.
    project_fn(target, center) may return None to signal an unrecoverable
    projection failure, which aborts the update.
    """
    x_cur = np.array(x0, dtype=float)
    f_cur = value_fn(x_cur)
    z = x_cur.copy()
    momentum = 0.1
    extrapolated = False
    for _ in range(config.pgd_max_iter):
        g = grad_fn(z)
        gn2 = float(g @ g)
        if not math.isfinite(gn2):
            break
        x_new = f_new = None
        eta = 1.0
        if radius_fn is not None and gn2 > 0.0:
            eta = min(1.0, max(radius_fn(x_cur) / math.sqrt(gn2), 1e-12))
        for _ in range(31):
            cand = project_fn(z + eta * g, x_cur)
            if cand is None:
                return x_cur
            f_cand = value_fn(cand)
            if f_cand >= f_cur + 1e-4 * eta * gn2:
                x_new, f_new = cand, f_cand
                break
            eta *= 0.5
        if x_new is None:
            if extrapolated:
                # momentum restart: retry the step from the accepted point
                z = x_cur.copy()
                momentum = 0.1
                extrapolated = False
                continue
            break
        step = float(np.linalg.norm(x_new - x_cur))
        momentum_next = (1.0 + math.sqrt(1.0 + 4.0 * momentum ** 2)) / 2.0
        zeta = (momentum_next - 1.0) / momentum_next
        z = x_new + zeta * (x_new - x_cur)
        extrapolated = True
        momentum = momentum_next
        x_cur, f_cur = x_new, f_new
        if step < config.pgd_step_tol:
            break
    return x_cur


def pgd_update_t(state: DesignState, channels: ChannelSet, config: SystemConfig,
                 kappa: float | None = None, *,
                 enforce_covertness: bool = True) -> np.ndarray:
    """Transmit-position update maximizing the transformed objective.

    The projection keeps the radar-SNR minorant and (optionally) the
    covertness majorant satisfied; failed projections shrink the trust
    model by doubling the curvature bounds up to three times before the
    round is skipped.
    """
    if kappa is None:
        kappa = solve_kappa(config.covertness_level, config.detection_samples)
    lam = config.wavelength
    angle = channels.target.angle
    a_r = steering_vector(state.r, angle, lam)
    unorm = float(np.vdot(state.u0, state.u0).real)
    c0 = config.reflection_gain * abs(np.vdot(state.u0, a_r)) ** 2 / (
        config.noise_radar * unorm)
    m0 = c0 * state.r0
    r_x = transmit_covariance(state.w, state.r0)
    m1 = config.willie_gain * (r_x - kappa * state.r0)
    g_const = (1.0 - kappa) * config.noise_willie

    def value_fn(t):
        return objective_value(t, channels, state.w, state.r0, state.rho,
                               state.upsilon, config.noise_user, lam)

    def grad_fn(t):
        return objective_gradient(t, channels, state.w, state.r0, state.rho,
                                  state.upsilon, lam)

    base = compute_lipschitz_deltas(state, channels, config, kappa)

    def surrogate_rows(center):
        snr_val = steering_quadform_value(center, angle, m0, lam)
        snr_grad = steering_quadform_gradient(center, angle, m0, lam)
        rows = [(snr_val - config.radar_snr_threshold, snr_grad,
                 max(base[0], 1e-12), center)]
        if enforce_covertness:
            cov_val = steering_quadform_value(center, angle, m1, lam) + g_const
            cov_grad = steering_quadform_gradient(center, angle, m1, lam)
            rows.append((-cov_val, -cov_grad, max(base[1], 1e-12), center))
        return rows

    m_eta0 = config.willie_gain * state.r0

    def gate_ok(cand):
        # the projection tolerance is loose, so check the actual constraint
        # values at the candidate; thresholds sit 10x inside the audit's
        if steering_quadform_value(cand, angle, m0, lam) < (
                config.radar_snr_threshold * (1.0 - 1e-7)):
            return False
        if not enforce_covertness:
            return True
        margin = steering_quadform_value(cand, angle, m1, lam) + g_const
        eta0 = steering_quadform_value(cand, angle, m_eta0, lam) + config.noise_willie
        return margin <= 1e-7 * kappa * eta0

    def project_fn(target, center):
        rows = surrogate_rows(center)
        for attempt in range(4):
            out = _build_projection(target, config, rows)
            if out is not None:
                if gate_ok(out):
                    return out
                # loose residual leaked through; redo this one solve tightly
                out = _build_projection(target, config, rows, tol=1e-8)
                if out is not None and gate_ok(out):
                    return out
            rows = [(v, g_row, 2.0 * d, c) for v, g_row, d, c in rows]
        return None

    def radius_fn(center):
        return min(_trust_radius(v, g_row, d)
                   for v, g_row, d, c in surrogate_rows(center))

    return _pgd_ascent(state.t, value_fn, grad_fn, project_fn, config,
                       radius_fn)


def pgd_update_r(state: DesignState, channels: ChannelSet,
                 config: SystemConfig) -> np.ndarray:
    """Receive-position update maximizing radar SNR at the fixed filter."""
    lam = config.wavelength
    angle = channels.target.angle
    a_t = steering_vector(state.t, angle, lam)
    illum = float(np.real(a_t.conj() @ (state.r0 @ a_t)))
    unorm = float(np.vdot(state.u0, state.u0).real)
    c1 = config.reflection_gain * illum / (config.noise_radar * unorm)
    m = c1 * np.outer(state.u0, state.u0.conj())

    def value_fn(r):
        return steering_quadform_value(r, angle, m, lam)

    def grad_fn(r):
        return steering_quadform_gradient(r, angle, m, lam)

    def project_fn(target, center):
        return _build_projection(target, config, [])

    return _pgd_ascent(state.r, value_fn, grad_fn, project_fn, config)


def update_receive_filter(state: DesignState, channels: ChannelSet,
                          config: SystemConfig):
    """Principal-eigenvector filters for both hypotheses.

    The filtered response matrix is rank one, so each filter aligns with
    the receive steering vector whenever the transmit side illuminates the
    target; the degenerate zero-illumination case falls back to the
    steering vector itself.
    """
    lam = config.wavelength
    angle = channels.target.angle
    a_t = steering_vector(state.t, angle, lam)
    a_r = steering_vector(state.r, angle, lam)
    out = []
    r_x1 = transmit_covariance(state.w, state.r0)
    for cov in (state.r0, r_x1):
        illum = float(np.real(a_t.conj() @ (cov @ a_t)))
        if illum <= 1e-30:
            out.append(a_r.copy())
            continue
        b = illum * np.outer(a_r, a_r.conj())
        b = (b + b.conj().T) / 2.0
        vals, vecs = np.linalg.eigh(b)
        u = vecs[:, -1]
        # deterministic phase: align with the steering vector
        phase = np.vdot(u, a_r)
        if abs(phase) > 0.0:
            u = u * (phase / abs(phase))
        out.append(u)
    return out[0], out[1]


# --- initialization, audit, outer loop ------------------------------------

def initialize_state(config: SystemConfig, channels: ChannelSet,
                     positions: np.ndarray | None = None, *,
                     enforce_covertness: bool = True) -> DesignState:
    """Feasible starting design on the half-wavelength grid.

    Matched-filter beamformers split half the budget equally; the radar
    part takes the other half as a scaled identity.  If the warden power
    ratio exceeds the cap the beamformers are scaled down to the boundary
    (the ratio is monotone in the common scale, so the boundary scale is
    the bisection limit in closed form).
    """
    n = config.num_antennas
    k = config.num_users
    grid = _grid_positions(config) if positions is None else np.array(positions, dtype=float)
    t = grid.copy()
    r = grid.copy()
    h = user_channel_matrix(t, channels, config.wavelength)
    w = np.zeros((n, k), dtype=complex)
    per_user = 0.5 * config.total_power / k
    for i in range(k):
        norm = float(np.linalg.norm(h[:, i]))
        if norm > 0.0:
            w[:, i] = math.sqrt(per_user) * h[:, i] / norm
    r0 = (0.5 * config.total_power / n) * np.eye(n, dtype=complex)
    angle = channels.target.angle
    a_r = steering_vector(r, angle, config.wavelength)
    if enforce_covertness:
        kappa = solve_kappa(config.covertness_level, config.detection_samples)
        eta0, eta1 = willie_powers(w, r0, t, angle=angle,
                                   wavelength=config.wavelength,
                                   willie_gain=config.willie_gain,
                                   noise_willie=config.noise_willie)
        excess = eta1 - eta0
        if excess > (kappa - 1.0) * eta0:
            scale = math.sqrt(max((kappa - 1.0) * eta0 / excess, 0.0))
            w = w * scale * (1.0 - 1e-12)
    state = DesignState(w=w, r0=r0, t=t, r=r, u0=a_r.copy(), u1=a_r.copy(),
                        rho=np.zeros(k), upsilon=np.zeros(k))
    state.rho = update_rho(state, channels, config)
    state.upsilon = update_upsilon(state, channels, config)
    snr = radar_snr(r0, t, r, state.u0, angle=angle,
                    wavelength=config.wavelength,
                    reflection_gain=config.reflection_gain,
                    noise_radar=config.noise_radar)
    if snr < config.radar_snr_threshold * (1.0 - 1e-9):
        raise InitializationError(
            f"radar SNR at the starting design is {snr:.4g}, below the "
            f"threshold {config.radar_snr_threshold:.4g}")
    return state


def audit_design(state: DesignState, channels: ChannelSet, config: SystemConfig,
                 *, enforce_covertness: bool = True) -> dict:
    """Constraint residuals of a design; 'ok' aggregates the tolerances."""
    angle = channels.target.angle
    lam = config.wavelength
    kappa = solve_kappa(config.covertness_level, config.detection_samples)
    snr = radar_snr(state.r0, state.t, state.r, state.u0, angle=angle,
                    wavelength=lam, reflection_gain=config.reflection_gain,
                    noise_radar=config.noise_radar)
    ratio = covert_ratio(state.w, state.r0, state.t, angle=angle, wavelength=lam,
                         willie_gain=config.willie_gain,
                         noise_willie=config.noise_willie)
    power = float(np.sum(np.abs(state.w) ** 2) + np.trace(state.r0).real)
    min_eig = float(np.linalg.eigvalsh((state.r0 + state.r0.conj().T) / 2.0)[0])
    checks = {
        "snr": snr >= config.radar_snr_threshold * (1.0 - 1e-6),
        "power": power <= config.total_power * (1.0 + 1e-8),
        "r0_psd": min_eig >= -1e-9,
    }
    if enforce_covertness:
        checks["covertness"] = ratio <= kappa * (1.0 + 1e-6)
    for name, positions in (("t", state.t), ("r", state.r)):
        diffs = np.diff(positions)
        checks[f"{name}_order"] = bool(np.all(diffs >= config.min_spacing - 1e-9))
        checks[f"{name}_region"] = bool(positions[0] >= -1e-9
                                        and positions[-1] <= config.region_length + 1e-9)
    return {
        "ok": all(checks.values()),
        "checks": checks,
        "snr": snr,
        "ratio": ratio,
        "power": power,
        "r0_min_eig": min_eig,
        "kappa": kappa,
    }


def _record(state: DesignState, channels: ChannelSet, config: SystemConfig,
            iteration: int) -> TraceEntry:
    h = user_channel_matrix(state.t, channels, config.wavelength)
    nats = sum_log_rate_nats(state.w, state.r0, h, config.noise_user)
    rate = sum_rate(user_sinr(state.w, state.r0, h, config.noise_user))
    angle = channels.target.angle
    snr = radar_snr(state.r0, state.t, state.r, state.u0, angle=angle,
                    wavelength=config.wavelength,
                    reflection_gain=config.reflection_gain,
                    noise_radar=config.noise_radar)
    ratio = covert_ratio(state.w, state.r0, state.t, angle=angle,
                         wavelength=config.wavelength,
                         willie_gain=config.willie_gain,
                         noise_willie=config.noise_willie)
    entry = TraceEntry(iteration=iteration, objective=nats, rate=rate,
                       snr=snr, ratio=ratio)
    state.trace.append(entry)
    return entry


def run_bcd(config: SystemConfig, channels: ChannelSet,
            init: DesignState | None = None, *,
            optimize_positions: bool = True,
            enforce_covertness: bool = True) -> DesignState:
    """Outer block-coordinate loop.

    Per iteration: multipliers, beamforming via relaxation and recovery,
    transmit positions, receive filters, receive positions.  Exits when the
    relative objective change drops below the configured threshold or the
    iteration cap is reached; the returned design must pass the final
    feasibility audit.
    """
    if init is None:
        state = initialize_state(config, channels,
                                 enforce_covertness=enforce_covertness)
    else:
        state = DesignState(w=init.w.copy(), r0=init.r0.copy(),
                            t=init.t.copy(), r=init.r.copy(),
                            u0=init.u0.copy(), u1=init.u1.copy(),
                            rho=init.rho.copy(), upsilon=init.upsilon.copy())
    kappa = solve_kappa(config.covertness_level, config.detection_samples)
    # a beamformer that bites the warden cap exactly freezes the position
    # step: the projection's quadratic trust row charges delta/2 |d|^2
    # against zero slack, so t can only creep at the solver-residual scale
    # even along directions the true constraint does not feel (a rigid array
    # shift leaves both single-angle quadforms invariant).  Solving the
    # beamforming step a hair inside the cap hands the position step real
    # slack to spend; the projection rows still enforce the full cap, and a
    # final full-cap polish reclaims the margin once positions settle.
    backoff = 0.02 if (optimize_positions and enforce_covertness) else 0.0
    kappa_solve = 1.0 + (1.0 - backoff) * (kappa - 1.0)
    prev = _record(state, channels, config, 0).objective
    iteration = 0
    for iteration in range(1, config.bcd_max_iter + 1):
        state.rho = update_rho(state, channels, config)
        state.upsilon = update_upsilon(state, channels, config)
        w_new, r0_new = solve_beamforming(
            state, channels, config, kappa_solve,
            enforce_covertness=enforce_covertness)
        if backoff:
            h = user_channel_matrix(state.t, channels, config.wavelength)
            if sum_log_rate_nats(w_new, r0_new, h, config.noise_user) < prev:
                # margin cost exceeds the mobility it buys; redo at the cap
                w_new, r0_new = solve_beamforming(
                    state, channels, config, kappa,
                    enforce_covertness=enforce_covertness)
        state.w, state.r0 = w_new, r0_new
        if optimize_positions:
            state.t = pgd_update_t(state, channels, config, kappa,
                                   enforce_covertness=enforce_covertness)
        state.u0, state.u1 = update_receive_filter(state, channels, config)
        if optimize_positions:
            state.r = pgd_update_r(state, channels, config)
        entry = _record(state, channels, config, iteration)
        if abs(entry.objective - prev) <= config.bcd_rel_tol * (1.0 + abs(prev)):
            prev = entry.objective
            break
        prev = entry.objective
    if backoff:
        # positions are settled; rebind the cap to reclaim the held-back
        # margin (ascent is guaranteed: the incoming design is feasible at
        # the full cap and the multipliers are refreshed at it)
        state.rho = update_rho(state, channels, config)
        state.upsilon = update_upsilon(state, channels, config)
        w_new, r0_new = solve_beamforming(state, channels, config, kappa,
                                          enforce_covertness=enforce_covertness)
        h = user_channel_matrix(state.t, channels, config.wavelength)
        if sum_log_rate_nats(w_new, r0_new, h, config.noise_user) >= prev:
            state.w, state.r0 = w_new, r0_new
            state.u0, state.u1 = update_receive_filter(state, channels, config)
            _record(state, channels, config, iteration + 1)
    report = audit_design(state, channels, config,
                          enforce_covertness=enforce_covertness)
    if not report["ok"]:
        failed = [name for name, ok in report["checks"].items() if not ok]
        raise AuditError(f"final design violates {failed}; report {report}")
    return state


def trace_to_csv(trace) -> str:
    lines = ["iteration,objective_nats,rate_bits,radar_snr,power_ratio"]
    for e in trace:
        lines.append(f"{e.iteration},{e.objective!r},{e.rate!r},{e.snr!r},{e.ratio!r}")
    return "\n".join(lines) + "\n"


def trace_to_json(trace) -> str:
    import json
    return json.dumps([dataclasses.asdict(e) for e in trace], indent=2)
