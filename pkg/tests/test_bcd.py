import dataclasses
import json
import math

import numpy as np
import pytest

from madfrc import bcd
from madfrc.channel import (objective_value, steering_quadform_gradient,
                            steering_quadform_hessian_bound,
                            steering_quadform_value, steering_vector,
                            user_channel_matrix)
from madfrc.config import SystemConfig
from madfrc.covertness import solve_kappa
from madfrc.metrics import (covert_ratio, radar_snr, sum_log_rate_nats,
                            transmit_covariance, user_sinr)
from madfrc.scenario import sample_channels

WAVELENGTH = 0.1


def small_config(**over):
    base = dict(num_antennas=3, num_users=2, num_paths=4,
                pgd_max_iter=10, bcd_max_iter=8)
    base.update(over)
    return dataclasses.replace(SystemConfig(), **base)


def prepared_state(config, seed=1):
    channels = sample_channels(config, seed=seed)
    state = bcd.initialize_state(config, channels)
    state.rho = bcd.update_rho(state, channels, config)
    state.upsilon = bcd.update_upsilon(state, channels, config)
    return state, channels


def golden_max(fn, lo, hi, iters=200):
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    for _ in range(iters):
        if fn(c) < fn(d):
            a = c
        else:
            b = d
        c, d = b - phi * (b - a), a + phi * (b - a)
    return 0.5 * (a + b)


# --- multiplier updates ---------------------------------------------------

def test_rho_update_equals_sinr_and_maximizes_per_user_term():
    cfg = small_config()
    state, channels = prepared_state(cfg)
    h = user_channel_matrix(state.t, channels, cfg.wavelength)
    sinr = user_sinr(state.w, state.r0, h, cfg.noise_user)
    rho = bcd.update_rho(state, channels, cfg)
    assert np.allclose(rho, sinr, rtol=1e-12)
    # each term ln(1+rho) - rho + (1+rho)*g/(1+g) peaks at rho = g
    for g in sinr:
        term = lambda r: math.log1p(r) - r + (1.0 + r) * g / (1.0 + g)
        star = golden_max(term, 0.0, 10.0 * g + 1.0)
        assert abs(star - g) < 1e-6 * (1.0 + g)
        assert term(g) >= term(g * 1.01) and term(g) >= term(g * 0.99)


def test_rho_at_optimum_recovers_log_rate():
    cfg = small_config()
    state, channels = prepared_state(cfg, seed=3)
    h = user_channel_matrix(state.t, channels, cfg.wavelength)
    rho = bcd.update_rho(state, channels, cfg)
    f1 = bcd.lagrangian_value(state.w, state.r0, h, rho, cfg.noise_user)
    direct = sum_log_rate_nats(state.w, state.r0, h, cfg.noise_user)
    assert abs(f1 - direct) < 1e-8 * (1.0 + abs(direct))


def test_upsilon_update_is_quadratic_transform_optimum():
    cfg = small_config()
    state, channels = prepared_state(cfg, seed=2)
    h = user_channel_matrix(state.t, channels, cfg.wavelength)
    r_x = transmit_covariance(state.w, state.r0)
    ups = bcd.update_upsilon(state, channels, cfg)
    for i in range(cfg.num_users):
        hk = h[:, i]
        sig = abs(hk.conj() @ state.w[:, i]) ** 2
        den = float(np.real(hk.conj() @ (r_x @ hk))) + cfg.noise_user
        quad = lambda u: 2.0 * u * math.sqrt(sig) - u * u * den
        # closed form matches the numeric maximizer (flat peak limits it to
        # ~sqrt(eps) relative) and restores S/D exactly
        star = golden_max(quad, 0.0, 2.0 * ups[i] + 1.0)
        assert abs(ups[i] - star) < 1e-6 * (1.0 + ups[i])
        assert quad(ups[i]) >= quad(star) - 1e-12 * (1.0 + abs(quad(star)))
        assert abs(quad(ups[i]) - sig / den) < 1e-12 * (1.0 + sig / den)


# --- beamforming block ----------------------------------------------------

def test_solve_beamforming_passes_audit_and_improves_objective():
    cfg = small_config()
    kappa = solve_kappa(cfg.covertness_level, cfg.detection_samples)
    for seed in (1, 2, 5):
        state, channels = prepared_state(cfg, seed=seed)
        h = user_channel_matrix(state.t, channels, cfg.wavelength)
        before = bcd.lagrangian_value(state.w, state.r0, h, state.rho,
                                      cfg.noise_user)
        state.w, state.r0 = bcd.solve_beamforming(state, channels, cfg, kappa)
        after = bcd.lagrangian_value(state.w, state.r0, h, state.rho,
                                     cfg.noise_user)
        assert after >= before - 1e-6
        report = bcd.audit_design(state, channels, cfg)
        assert report["ok"], report


def test_beamforming_single_user_no_radar_is_matched_filter():
    cfg = small_config(num_users=1, radar_snr_threshold=0.0)
    state, channels = prepared_state(cfg, seed=4)
    state.w, state.r0 = bcd.solve_beamforming(state, channels, cfg,
                                              enforce_covertness=False)
    h = user_channel_matrix(state.t, channels, cfg.wavelength)[:, 0]
    w = state.w[:, 0]
    align = abs(h.conj() @ w) / (np.linalg.norm(h) * np.linalg.norm(w))
    assert align > 1.0 - 1e-6
    snr = abs(h.conj() @ w) ** 2 / cfg.noise_user
    ideal = cfg.total_power * np.linalg.norm(h) ** 2 / cfg.noise_user
    assert snr > (1.0 - 1e-5) * ideal


def test_recovery_preserves_objective_and_leftover_psd():
    rng = np.random.default_rng(7)
    n, k = 4, 3
    for _ in range(50):
        h = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
        users = []
        for i in range(k):
            rank = rng.integers(1, n + 1)
            g = (rng.standard_normal((n, rank))
                 + 1j * rng.standard_normal((n, rank)))
            users.append(g @ g.conj().T)
        g0 = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
        radar = g0 @ g0.conj().T
        total = radar + sum(users)
        rho = rng.uniform(0.5, 3.0, size=k)
        ups = rng.uniform(0.1, 2.0, size=k)
        w, r0 = bcd.recover_rank_one(total, users, h, radar)
        for i in range(k):
            sig_rel = abs(h[:, i].conj() @ (users[i] @ h[:, i]))
            sig_one = abs(h[:, i].conj() @ w[:, i]) ** 2
            assert abs(sig_one - sig_rel) < 1e-8 * (1.0 + abs(sig_rel))
            leftover = users[i] - np.outer(w[:, i], w[:, i].conj())
            assert np.min(np.linalg.eigvalsh((leftover + leftover.conj().T) / 2)) >= -1e-9
        before = bcd.relaxed_objective(total, users, h, rho, ups)
        after = bcd.relaxed_objective(
            total, [np.outer(w[:, i], w[:, i].conj()) for i in range(k)],
            h, rho, ups)
        assert abs(before - after) < 1e-8 * (1.0 + abs(before))
        # total covariance is redistributed, not changed
        rebuilt = r0 + sum(np.outer(w[:, i], w[:, i].conj()) for i in range(k))
        assert np.allclose(rebuilt, total, atol=1e-10)


def test_recovery_zero_signal_folds_block():
    n = 3
    h = np.zeros((n, 1), dtype=complex)
    h[0, 0] = 1.0 + 0.5j
    v = np.array([0.0, 1.0, 2.0j])  # exactly orthogonal to the channel
    ru = np.outer(v, v.conj())
    radar = np.eye(n, dtype=complex)
    w, r0 = bcd.recover_rank_one(radar + ru, [ru], h, radar)
    assert np.all(w == 0)
    assert np.allclose(r0, radar + ru, atol=1e-12)


# --- curvature bounds and trust radii -------------------------------------

def test_lipschitz_deltas_dominate_sampled_hessian():
    cfg = small_config()
    state, channels = prepared_state(cfg, seed=6)
    kappa = solve_kappa(cfg.covertness_level, cfg.detection_samples)
    state.w, state.r0 = bcd.solve_beamforming(state, channels, cfg, kappa)
    d0, d1 = bcd.compute_lipschitz_deltas(state, channels, cfg, kappa)
    angle = channels.target.angle
    c0 = cfg.reflection_gain * abs(np.vdot(state.u0, steering_vector(
        state.r, angle, cfg.wavelength))) ** 2 / (
            cfg.noise_radar * np.linalg.norm(state.u0) ** 2)
    m0 = c0 * state.r0
    r_x = transmit_covariance(state.w, state.r0)
    m1 = cfg.willie_gain * (r_x - kappa * state.r0)
    rng = np.random.default_rng(0)
    for m, d in ((m0, d0), (m1, d1)):
        for _ in range(20):
            t = np.sort(rng.uniform(0.0, cfg.region_length, cfg.num_antennas))
            hess = bcd._fd_hessian_norm(
                lambda x: steering_quadform_gradient(x, angle, m, cfg.wavelength), t)
            assert d >= hess * (1.0 - 1e-6)


def test_hessian_bound_trivial_cases():
    assert steering_quadform_hessian_bound(0.5, np.zeros((3, 3)), WAVELENGTH) == 0.0
    assert steering_quadform_hessian_bound(0.5, np.ones((1, 1)), WAVELENGTH) == 0.0


def test_trust_radius_closed_forms():
    g = np.array([3.0, 4.0])  # norm 5
    assert abs(bcd._trust_radius(0.0, g, 2.0) - 5.0) < 1e-12
    assert abs(bcd._trust_radius(9.0, np.zeros(2), 2.0) - 3.0) < 1e-12
    assert bcd._trust_radius(-1.0, np.zeros(2), 2.0) >= 1e-9


# --- projection -----------------------------------------------------------

def test_projection_identity_on_feasible_target():
    cfg = small_config()
    target = bcd._grid_positions(cfg)
    out = bcd._build_projection(target, cfg, [])
    assert np.array_equal(out, target)


def test_projection_restores_ordering_and_is_closest():
    cfg = small_config(num_antennas=2)
    target = np.array([0.6, 0.3])  # inverted pair
    out = bcd._build_projection(target, cfg, [])
    assert out[1] - out[0] >= cfg.min_spacing - 1e-9
    assert out[0] >= -1e-12 and out[1] <= cfg.region_length + 1e-12
    # analytic projection of an inverted pair: meet at the weighted middle
    mid = 0.5 * (target[0] + target[1])
    expect = np.array([mid - cfg.min_spacing / 2, mid + cfg.min_spacing / 2])
    assert np.allclose(out, expect, atol=2e-5)
    rng = np.random.default_rng(3)
    for _ in range(50):
        alt = np.sort(rng.uniform(0.0, cfg.region_length, 2))
        if alt[1] - alt[0] < cfg.min_spacing:
            continue
        assert (np.linalg.norm(out - target)
                <= np.linalg.norm(alt - target) + 1e-6)


def test_projection_respects_quadratic_row():
    cfg = small_config(num_antennas=2)
    center = np.array([0.4, 0.5])
    grad = np.array([1.0, 0.0])
    delta = 4.0
    # row demands 0 + grad.(t-center) - delta/2 |t-center|^2 >= 0
    target = center + np.array([0.2, 0.0])
    out = bcd._build_projection(target, cfg, [(0.0, grad, delta, center)])
    d = out - center
    assert grad @ d - 0.5 * delta * d @ d >= -1e-6
    assert out[1] - out[0] >= cfg.min_spacing - 1e-9


def test_pgd_ascent_on_concave_quadratic_toy():
    cfg = small_config(num_antennas=2, pgd_max_iter=200)
    goal = np.array([0.30, 0.80])
    value = lambda t: -float((t - goal) @ (t - goal))
    grad = lambda t: -2.0 * (t - goal)
    project = lambda target, center: bcd._build_projection(target, cfg, [])
    out = bcd._pgd_ascent(np.array([0.1, 0.9]), value, grad, project, cfg)
    assert np.allclose(out, goal, atol=1e-4)


def test_pgd_ascent_zero_gradient_fixed_point():
    cfg = small_config(num_antennas=2)
    x0 = np.array([0.2, 0.7])
    value = lambda t: 1.0
    grad = lambda t: np.zeros(2)
    project = lambda target, center: bcd._build_projection(target, cfg, [])
    out = bcd._pgd_ascent(x0, value, grad, project, cfg)
    assert np.allclose(out, x0, atol=1e-9)


def test_position_update_keeps_feasibility_and_surrogate_value():
    cfg = small_config()
    kappa = solve_kappa(cfg.covertness_level, cfg.detection_samples)
    for seed in (1, 4):
        state, channels = prepared_state(cfg, seed=seed)
        state.w, state.r0 = bcd.solve_beamforming(state, channels, cfg, kappa)
        state.u0, state.u1 = bcd.update_receive_filter(state, channels, cfg)
        # ascent is guaranteed for the quadratic-transform surrogate, which is
        # what the position step climbs; the log-rate chain closes only once
        # the multipliers are refreshed at the new beamformers
        f_before = objective_value(state.t, channels, state.w, state.r0,
                                   state.rho, state.upsilon,
                                   cfg.noise_user, cfg.wavelength)
        t_new = bcd.pgd_update_t(state, channels, cfg, kappa)
        assert np.all(np.diff(t_new) >= cfg.min_spacing - 1e-9)
        assert t_new[0] >= -1e-12 and t_new[-1] <= cfg.region_length + 1e-12
        f_after = objective_value(t_new, channels, state.w, state.r0,
                                  state.rho, state.upsilon,
                                  cfg.noise_user, cfg.wavelength)
        assert f_after >= f_before - 1e-9
        moved = state.t.copy()
        state.t = t_new
        report = bcd.audit_design(state, channels, cfg)
        assert report["ok"], (seed, report, moved)


# --- receive side ---------------------------------------------------------

def test_receive_filter_aligns_with_steering_vector():
    cfg = small_config()
    state, channels = prepared_state(cfg, seed=8)
    kappa = solve_kappa(cfg.covertness_level, cfg.detection_samples)
    state.w, state.r0 = bcd.solve_beamforming(state, channels, cfg, kappa)
    u0, u1 = bcd.update_receive_filter(state, channels, cfg)
    a_r = steering_vector(state.r, channels.target.angle, cfg.wavelength)
    for u in (u0, u1):
        align = abs(np.vdot(u, a_r)) / (np.linalg.norm(u) * np.linalg.norm(a_r))
        assert align > 1.0 - 1e-9


def test_receive_filter_beats_random_filters():
    cfg = small_config()
    state, channels = prepared_state(cfg, seed=9)
    kappa = solve_kappa(cfg.covertness_level, cfg.detection_samples)
    state.w, state.r0 = bcd.solve_beamforming(state, channels, cfg, kappa)
    state.u0, state.u1 = bcd.update_receive_filter(state, channels, cfg)
    kw = dict(angle=channels.target.angle, wavelength=cfg.wavelength,
              reflection_gain=cfg.reflection_gain, noise_radar=cfg.noise_radar)
    best = radar_snr(state.r0, state.t, state.r, state.u0, **kw)
    rng = np.random.default_rng(0)
    n = cfg.num_antennas
    for _ in range(100):
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        trial = radar_snr(state.r0, state.t, state.r, u, **kw)
        assert best >= trial - 1e-9 * best


def test_receive_position_update_is_noop_at_optimal_filter():
    cfg = small_config()
    state, channels = prepared_state(cfg, seed=10)
    kappa = solve_kappa(cfg.covertness_level, cfg.detection_samples)
    state.w, state.r0 = bcd.solve_beamforming(state, channels, cfg, kappa)
    state.u0, state.u1 = bcd.update_receive_filter(state, channels, cfg)
    r_new = bcd.pgd_update_r(state, channels, cfg)
    assert np.max(np.abs(r_new - state.r)) < 1e-6


# --- initialization and audit ---------------------------------------------

def test_initialize_state_is_feasible():
    for seed in (1, 2, 3):
        cfg = small_config()
        channels = sample_channels(cfg, seed=seed)
        state = bcd.initialize_state(cfg, channels)
        report = bcd.audit_design(state, channels, cfg)
        assert report["ok"], report


def test_initialize_state_rejects_impossible_radar_demand():
    cfg = small_config(radar_snr_threshold=1e12)
    channels = sample_channels(cfg, seed=1)
    with pytest.raises(bcd.InitializationError):
        bcd.initialize_state(cfg, channels)


# --- outer loop -----------------------------------------------------------

def test_run_bcd_monotone_and_audited():
    cfg = small_config()
    for seed in (1, 2, 3):
        channels = sample_channels(cfg, seed=seed)
        state = bcd.run_bcd(cfg, channels)
        objs = [e.objective for e in state.trace]
        assert len(objs) >= 2
        for a, b in zip(objs, objs[1:]):
            assert b >= a - 1e-6
        report = bcd.audit_design(state, channels, cfg)
        assert report["ok"], report


def test_run_bcd_surrogate_consistency_each_iterate():
    cfg = small_config()
    channels = sample_channels(cfg, seed=5)
    state = bcd.run_bcd(cfg, channels)
    h = user_channel_matrix(state.t, channels, cfg.wavelength)
    rho = bcd.update_rho(state, channels, cfg)
    f1 = bcd.lagrangian_value(state.w, state.r0, h, rho, cfg.noise_user)
    direct = sum_log_rate_nats(state.w, state.r0, h, cfg.noise_user)
    assert abs(f1 - direct) < 1e-8 * (1.0 + abs(direct))


def test_run_bcd_loose_constraints_dominate_tight():
    cfg_tight = small_config(bcd_max_iter=6)
    channels = sample_channels(cfg_tight, seed=2)
    tight = bcd.run_bcd(cfg_tight, channels)
    cfg_loose = dataclasses.replace(cfg_tight, radar_snr_threshold=0.0,
                                    covertness_level=1.0)
    loose = bcd.run_bcd(cfg_loose, channels)
    assert loose.trace[-1].rate >= tight.trace[-1].rate - 1e-6


def test_run_bcd_fixed_positions_leaves_grid():
    cfg = small_config(bcd_max_iter=4)
    channels = sample_channels(cfg, seed=3)
    state = bcd.run_bcd(cfg, channels, optimize_positions=False)
    assert np.array_equal(state.t, bcd._grid_positions(cfg))
    assert np.array_equal(state.r, bcd._grid_positions(cfg))


def test_run_bcd_without_covertness_ignores_ratio():
    cfg = small_config(bcd_max_iter=4)
    channels = sample_channels(cfg, seed=4)
    state = bcd.run_bcd(cfg, channels, enforce_covertness=False)
    kappa = solve_kappa(cfg.covertness_level, cfg.detection_samples)
    ratio = covert_ratio(state.w, state.r0, state.t,
                         angle=channels.target.angle,
                         wavelength=cfg.wavelength,
                         willie_gain=cfg.willie_gain,
                         noise_willie=cfg.noise_willie)
    # unconstrained designs blast past the covertness cap
    assert ratio > kappa
    report = bcd.audit_design(state, channels, cfg, enforce_covertness=False)
    assert report["ok"], report


# --- trace serialization --------------------------------------------------

def test_trace_serialization_round_trip():
    cfg = small_config(bcd_max_iter=3)
    channels = sample_channels(cfg, seed=1)
    state = bcd.run_bcd(cfg, channels)
    csv_text = bcd.trace_to_csv(state.trace)
    lines = csv_text.strip().splitlines()
    assert lines[0].startswith("iteration")
    assert len(lines) == len(state.trace) + 1
    data = json.loads(bcd.trace_to_json(state.trace))
    assert len(data) == len(state.trace)
    assert data[0]["iteration"] == 0
    assert abs(data[-1]["objective"] - state.trace[-1].objective) < 1e-12
