"""Pure numpy implementations of the solver's inner kernels.

Units are normalised: ``c = beta / sigma^2`` (1/W), water level ``W = c V / (1 + G)``
where ``V`` is the scaled QoS multiplier (W) and ``G`` the scaled power-cap
multiplier. See :mod:`lanealloc.solver` for the mapping to physical units.
"""

import numpy as np


def link_response(W, L):
    """Self-consistent power and rate at normalised water level ``W``.

    Solves ``x + u*(x) = W`` where ``u*`` is the deterministic-equivalent
    fixed point at SNR ``x``; that is the point where the closed-form power
    update and the pinned ``omega = ln u*`` agree.

    Returns ``(x, e, g)``: SNR ``x``, ``e = u* - 1`` and the rate ``g`` in
    nats/s/Hz. All three are 0 where ``W <= 1``.

    ``L = 0`` marks a link whose gain is known exactly (no fading left to
    average): plain water-filling, ``x = W - 1`` and ``g = ln W``.
    """
    W = np.asarray(W, dtype=float)
    L = np.asarray(L, dtype=float)
    on = W > 1.0
    wm1 = np.where(on, W - 1.0, 0.0)
    b = 2.0 + W * (L - 1.0)
    bs = b + np.sqrt(b * b + 4.0 * wm1)
    e = 2.0 * wm1 / bs
    x = wm1 * (bs - 2.0) / bs
    u = 1.0 + e
    g = np.log1p(x / u) + L * (np.log1p(e) - e / u)
    known = L <= 0
    if np.any(known):
        x = np.where(known, wm1, x)
        e = np.where(known, 0.0, e)
        g = np.where(known, np.log1p(wm1), g)
    return x, e, g


def dual_sweep(c, V, window, gam, L):
    """One pass of the per-link power/assignment step over every slot, BS
    and subcarrier.

    Parameters
    ----------
    c : ndarray, shape (M, J, N, K)
        Normalised gains ``beta / sigma^2``.
    V : ndarray, shape (K, n_windows)
        Scaled QoS multipliers per user and demand window.
    window : ndarray of int, shape (M,)
        Demand window of each slot.
    gam : ndarray, shape (M, J)
        Scaled power-cap multipliers.
    L : ndarray of int, shape (J,)
        Antenna count per BS.

    Returns
    -------
    assign, power, rate, e, block_power, user_rate, u_sum
        ``assign[m, j, n]`` is the served user or -1; ``power`` and ``rate``
        (nats/s/Hz) belong to that user; ``e = u* - 1``; ``block_power`` is
        the power per (m, j); ``user_rate`` sums ``rate`` per (user, window);
        ``u_sum`` is the sum of the negative assignment metrics.
    """
    M, J, N, K = c.shape
    a = 1.0 + gam                                    # (M, J)
    Vm = V[:, window].T                              # (M, K)
    W = c * (Vm[:, None, None, :] / a[:, :, None, None])
    Lb = np.broadcast_to(L.astype(float)[None, :, None, None], W.shape)
    x, e, g = link_response(W, Lb)
    with np.errstate(divide="ignore", invalid="ignore"):
        P = np.where(x > 0, x / c, 0.0)
    U = a[:, :, None, None] * P - Vm[:, None, None, :] * g
    U = np.where(W > 1.0, U, 0.0)
    best = np.argmin(U, axis=-1)
    pick = best[..., None]
    umin = np.take_along_axis(U, pick, -1)[..., 0]
    on = umin < 0.0
    assign = np.where(on, best, -1)
    power = np.where(on, np.take_along_axis(P, pick, -1)[..., 0], 0.0)
    rate = np.where(on, np.take_along_axis(g, pick, -1)[..., 0], 0.0)
    e_sel = np.where(on, np.take_along_axis(e, pick, -1)[..., 0], 0.0)
    block_power = power.sum(axis=2)
    user_rate = np.zeros(V.shape)
    mm, jj, nn = np.nonzero(on)
    np.add.at(user_rate, (assign[mm, jj, nn], window[mm]), rate[mm, jj, nn])
    u_sum = float(umin[on].sum())
    return assign, power, rate, e_sel, block_power, user_rate, u_sum
