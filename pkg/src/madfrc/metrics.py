"""Link-level figures of merit: user SINR, sum rate, radar SNR, warden powers."""

from __future__ import annotations

import math

import numpy as np

from .channel import steering_vector


def transmit_covariance(w: np.ndarray, r0: np.ndarray) -> np.ndarray:
    """Covariance of precoded user streams plus the dedicated sensing signal."""
    return w @ w.conj().T + r0


def user_sinr(w: np.ndarray, r0: np.ndarray, h: np.ndarray,
              noise_user: float) -> np.ndarray:
    """Per-user SINR; h is (N, K) with one channel per column."""
    k = w.shape[1]
    gains = np.abs(h.conj().T @ w) ** 2          # gains[k, j] = |h_k^H w_j|^2
    sense = np.einsum("nk,nm,mk->k", h.conj(), r0, h).real
    out = np.empty(k)
    for i in range(k):
        interference = gains[i].sum() - gains[i, i]
        out[i] = gains[i, i] / (interference + sense[i] + noise_user)
    return out


def sum_rate(sinr: np.ndarray) -> float:
    """Aggregate downlink rate in bits per channel use."""
    return float(np.sum(np.log2(1.0 + np.asarray(sinr))))


def radar_snr(r_x: np.ndarray, t: np.ndarray, r: np.ndarray, u: np.ndarray,
              *, angle: float, wavelength: float, reflection_gain: float,
              noise_radar: float) -> float:
    """Output SNR of the receive filter u against the round-trip response.

    The two-way response is rank one, so the numerator splits into the
    transmit-side illumination power times the receive-side match.
    """
    a_t = steering_vector(t, angle, wavelength)
    a_r = steering_vector(r, angle, wavelength)
    illum = float(np.real(a_t.conj() @ (r_x @ a_t)))
    match = abs(np.vdot(u, a_r)) ** 2
    return reflection_gain * match * illum / (noise_radar * float(np.vdot(u, u).real))


def willie_powers(w: np.ndarray, r0: np.ndarray, t: np.ndarray, *,
                  angle: float, wavelength: float, willie_gain: float,
                  noise_willie: float) -> tuple[float, float]:
    """Received power at the warden under each hypothesis.

    Returns (eta0, eta1): sensing-only power and sensing-plus-communication
    power.  eta1 >= eta0 always.
    """
    a_t = steering_vector(t, angle, wavelength)
    sense = float(np.real(a_t.conj() @ (r0 @ a_t)))
    comm = float(np.sum(np.abs(a_t.conj() @ w) ** 2))
    eta0 = willie_gain * sense + noise_willie
    eta1 = eta0 + willie_gain * comm
    return eta0, eta1


def covert_ratio(w: np.ndarray, r0: np.ndarray, t: np.ndarray, *,
                 angle: float, wavelength: float, willie_gain: float,
                 noise_willie: float) -> float:
    """eta1 / eta0 at the warden; the quantity the covertness cap bounds."""
    eta0, eta1 = willie_powers(w, r0, t, angle=angle, wavelength=wavelength,
                               willie_gain=willie_gain, noise_willie=noise_willie)
    return eta1 / eta0


def sum_log_rate_nats(w: np.ndarray, r0: np.ndarray, h: np.ndarray,
                      noise_user: float) -> float:
    """Sum of log(1 + SINR) in nats; the optimizer's native objective scale."""
    sinr = user_sinr(w, r0, h, noise_user)
    return float(np.sum(np.log1p(sinr)))


def rate_from_nats(nats: float) -> float:
    return nats / math.log(2.0)
