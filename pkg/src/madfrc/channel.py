"""Position-dependent channel synthesis and its derivatives.

Conventions used throughout:

* ``chi[l, n] = (2*pi/wavelength) * positions[n] * cos(angles[l])`` is the
  phase the n-th element contributes on path l.
* The field-response matrix has entries ``G[l, n] = exp(+1j * chi[l, n])``.
* A user's channel vector is ``h[n] = sum_l conj(gain_l) * exp(-1j * chi[l, n])``
  so that ``h^H`` matches the row-vector form combining path gains with G.
* Steering vectors are ``a[n] = exp(+1j * chi_n)`` for a single angle.

Quadratic forms ``h(t)^H M h(t)`` with Hermitian M, their exact position
gradients, and a global curvature bound are the workhorses for every
position update in the optimizer.  The gradient is implemented as the
amplitude/phase triple sum (diagonal pair term plus two off-diagonal terms);
``quadform_gradient_compact`` provides an algebraically independent route
kept solely for cross-checking, and finite differences arbitrate in tests.
"""

from __future__ import annotations

import math

import numpy as np

from .scenario import ChannelSet, UserChannel


class DegenerateGradientError(ValueError):
    """Gradient requested at a point where a 1/sqrt factor blows up."""


def propagation_diff(position: float, angle: float) -> float:
    """Excess path length of an element at ``position`` toward ``angle``."""
    return position * math.cos(angle)


def steering_vector(positions: np.ndarray, angle: float, wavelength: float) -> np.ndarray:
    """Unit-modulus array response for a far-field source at ``angle``."""
    k0 = 2.0 * math.pi / wavelength
    return np.exp(1j * k0 * np.asarray(positions, dtype=float) * math.cos(angle))


def field_response_matrix(positions: np.ndarray, user: UserChannel,
                          wavelength: float) -> np.ndarray:
    """(L, N) matrix of per-path element responses at the given positions."""
    k0 = 2.0 * math.pi / wavelength
    chi = k0 * np.outer(np.cos(user.angles), positions)
    return np.exp(1j * chi)

def user_channel_vector(positions: np.ndarray, user: UserChannel,
                        wavelength: float) -> np.ndarray:
    """Effective (N,) downlink channel: path gains combined through G."""
    g = field_response_matrix(positions, user, wavelength)
    return g.conj().T @ user.gains.conj()


def user_channel_matrix(positions: np.ndarray, channels: ChannelSet,
                        wavelength: float) -> np.ndarray:
    """(N, K) matrix with one user channel per column."""
    cols = [user_channel_vector(positions, u, wavelength) for u in channels.users]
    return np.stack(cols, axis=1)


def target_response(t_positions: np.ndarray, r_positions: np.ndarray,
                    angle: float, wavelength: float) -> np.ndarray:
    """Rank-one two-way response a_r(angle) a_t(angle)^H."""
    a_t = steering_vector(t_positions, angle, wavelength)
    a_r = steering_vector(r_positions, angle, wavelength)
    return np.outer(a_r, a_t.conj())


def _phase_tables(positions, angles, gains, matrix, wavelength):
    """Common amplitude/phase arrays for the triple-sum derivative forms."""
    matrix = np.asarray(matrix)
    if not np.allclose(matrix, matrix.conj().T, atol=1e-10 * max(1.0, np.abs(matrix).max())):
        raise ValueError("quadform matrix must be Hermitian")
    k0 = 2.0 * math.pi / wavelength
    positions = np.asarray(positions, dtype=float)
    cos_psi = np.cos(np.asarray(angles, dtype=float))
    chi_t = k0 * np.outer(positions, cos_psi)          # (N, L): chi[l, n] transposed
    amp_m = np.abs(matrix)
    ph_m = np.angle(matrix)
    amp_s = np.abs(gains)
    ph_s = np.angle(gains)
    # mu[n, m, l, p] = |M[n,m]| |sigma_l| |sigma_p|
    mu = amp_m[:, :, None, None] * amp_s[None, None, :, None] * amp_s[None, None, None, :]
    # theta[n, m, l, p] = ang M[n,m] + ang sigma_l - ang sigma_p + chi[l,n] - chi[p,m]
    theta = (ph_m[:, :, None, None]
             + ph_s[None, None, :, None] - ph_s[None, None, None, :]
             + chi_t[:, None, :, None] - chi_t[None, :, None, :])
    return k0, cos_psi, mu, theta


def quadform_value(positions, angles, gains, matrix, wavelength) -> float:
    """h(t)^H M h(t) for the channel built from (angles, gains); M Hermitian."""
    k0 = 2.0 * math.pi / wavelength
    chi = k0 * np.outer(np.cos(np.asarray(angles, dtype=float)),
                        np.asarray(positions, dtype=float))
    h = np.exp(-1j * chi).T @ np.conj(gains)
    return float(np.real(h.conj() @ (matrix @ h)))


def quadform_gradient(positions, angles, gains, matrix, wavelength) -> np.ndarray:
    """Exact gradient of ``quadform_value`` with respect to each position.

    Triple-sum form: a same-element term over path pairs l < p plus two
    cross-element terms (partners above and below the diagonal), each scaled
    by 4*pi/wavelength.  Collapsing symmetric pairs, the same-element part is
    accumulated over all (l, p) at half weight.
    """
    k0, cos_psi, mu, theta = _phase_tables(positions, angles, gains, matrix, wavelength)
    s = mu * np.sin(theta)                              # (N, N, L, L)
    a1 = np.einsum("nmlp,l->nm", s, cos_psi)
    a2 = np.einsum("nmlp,p->nm", s, cos_psi)
    n = s.shape[0]
    diag = -k0 * (np.diagonal(a1) - np.diagonal(a2))
    upper = np.triu(np.ones((n, n)), k=1)
    hi = -2.0 * k0 * (a1 * upper).sum(axis=1)           # partners m > n
    lo = 2.0 * k0 * (a2 * upper).sum(axis=0)            # partners m < n
    return diag + hi + lo


def quadform_gradient_compact(positions, angles, gains, matrix, wavelength) -> np.ndarray:
    """Independent gradient route via 2 Re{conj(h'_n) (M h)_n}; cross-check only."""
    k0 = 2.0 * math.pi / wavelength
    cos_psi = np.cos(np.asarray(angles, dtype=float))
    chi = k0 * np.outer(cos_psi, np.asarray(positions, dtype=float))
    e = np.exp(-1j * chi)                               # (L, N)
    h = e.T @ np.conj(gains)
    hp = e.T @ (np.conj(gains) * (-1j * k0 * cos_psi))
    return 2.0 * np.real(np.conj(hp) * (matrix @ h))


def quadform_hessian_bound(angles, gains, matrix, wavelength) -> float:
    """Global spectral-norm bound on the Hessian of ``quadform_value``.

    Each phase term contributes curvature at most mu * ||grad phase||^2; the
    bound is position-independent because phases are affine in positions.
    """
    k0 = 2.0 * math.pi / wavelength
    cos_psi = np.cos(np.asarray(angles, dtype=float))
    amp_m = np.abs(matrix)
    amp_s = np.abs(np.asarray(gains))
    pair = np.outer(amp_s, amp_s)                       # (L, L)
    dcos = np.subtract.outer(cos_psi, cos_psi) ** 2
    sq = np.add.outer(cos_psi ** 2, cos_psi ** 2)
    diag_sum = float(np.sum(np.diagonal(amp_m)[:, None, None] * pair * dcos)) / 2.0
    upper = np.triu(amp_m, k=1)
    off_sum = float(np.sum(upper[:, :, None, None] * pair[None, None, :, :]
                           * sq[None, None, :, :]))
    return 2.0 * k0 ** 2 * (diag_sum + off_sum)


def steering_quadform_value(positions, angle, matrix, wavelength) -> float:
    """a(t)^H M a(t) for the unit-modulus steering vector at ``angle``.

    Routed through the channel quadform with a single unit-gain path, which
    realizes conj(a); feeding conj(M) recovers the steering-side form.
    """
    return quadform_value(positions, [angle], np.array([1.0 + 0j]),
                          np.conj(matrix), wavelength)


def steering_quadform_gradient(positions, angle, matrix, wavelength) -> np.ndarray:
    """Position gradient of ``steering_quadform_value``."""
    return quadform_gradient(positions, [angle], np.array([1.0 + 0j]),
                             np.conj(matrix), wavelength)


def steering_quadform_hessian_bound(angle, matrix, wavelength) -> float:
    """Curvature bound matching ``steering_quadform_value``."""
    return quadform_hessian_bound([angle], np.array([1.0 + 0j]),
                                  np.conj(matrix), wavelength)


def objective_value(positions, channels: ChannelSet, w, r0, rho, upsilon,
                    noise_user, wavelength) -> float:
    """Concave position surrogate: quadratic-transform objective plus its
    rho-dependent constant, so that at the optimal multipliers it equals the
    sum of log(1 + SINR) terms."""
    r_x = w @ w.conj().T + r0
    total = 0.0
    for k, user in enumerate(channels.users):
        h = user_channel_vector(positions, user, wavelength)
        sig = abs(h.conj() @ w[:, k]) ** 2
        den = float(np.real(h.conj() @ (r_x @ h))) + noise_user
        total += (math.log1p(rho[k]) - rho[k]
                  + 2.0 * (1.0 + rho[k]) * upsilon[k] * math.sqrt(max(sig, 0.0))
                  - (1.0 + rho[k]) * upsilon[k] ** 2 * den)
    return total


def objective_gradient(positions, channels: ChannelSet, w, r0, rho, upsilon,
                       wavelength) -> np.ndarray:
    """Exact position gradient of ``objective_value``.

    The interference sum telescopes: every user's denominator quadform uses
    the full transmit covariance, so only two quadform gradients per user are
    needed.  A vanishing signal quadform with a nonzero multiplier has no
    finite gradient and raises DegenerateGradientError; a zero multiplier
    simply drops the term.
    """
    positions = np.asarray(positions, dtype=float)
    r_x = w @ w.conj().T + r0
    grad = np.zeros_like(positions)
    for k, user in enumerate(channels.users):
        weight = 1.0 + rho[k]
        rk = np.outer(w[:, k], w[:, k].conj())
        sig = quadform_value(positions, user.angles, user.gains, rk, wavelength)
        if upsilon[k] != 0.0:
            scale = float(np.linalg.norm(user.gains) ** 2
                          * np.linalg.norm(w[:, k]) ** 2) * len(positions)
            if sig <= 1e-28 * max(scale, 1e-300):
                raise DegenerateGradientError(
                    f"user {k}: signal quadform {sig:.3e} vanishes with nonzero "
                    f"multiplier {upsilon[k]:.3e}")
            g_sig = quadform_gradient(positions, user.angles, user.gains, rk, wavelength)
            grad += weight * upsilon[k] / math.sqrt(sig) * g_sig
        g_den = quadform_gradient(positions, user.angles, user.gains, r_x, wavelength)
        grad -= weight * upsilon[k] ** 2 * g_den
    return grad
