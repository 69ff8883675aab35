"""Pure numpy trajectory stepping, vectorized over the samples of a chunk."""

from __future__ import annotations

import numpy as np


def _band_apply(bands, x):
    """Tridiagonal products for stacked bands ``(..., 3, N)`` and states ``(S, N)``.

    Returns ``(S, ..., N)``.
    """
    S, N = x.shape
    lead = bands.shape[:-2]
    xs = x.reshape((S,) + (1,) * len(lead) + (N,))
    out = bands[..., 1, :] * xs
    if N > 1:
        out[..., 1:] += bands[..., 0, 1:] * xs[..., :-1]
        out[..., :-1] += bands[..., 2, :-1] * xs[..., 1:]
    return out


def advance_block(X, normals, dt, d_det, prefix, diagonal, mode_bands, amplitudes,
                  pair_index, pair_bands, pair_weights, gram_bands, norms_out, states_out,
                  mode_span=None, pair_span=None):
    """Advance every sample of ``X`` (``(S, N)``, updated in place) by ``B`` steps.

    ``normals`` is ``(S, B, kappa)`` standard normals; the Brownian increment
    of mode ``k`` is ``sqrt(dt) * normals[..., k]``.  The one-step map is
    ``x <- d_det x + prefix (sum_k a_k dbeta_k B_k x + sum_p w_p dd_p B'_p x)``
    with ``B_k``, ``B'_p`` given as tridiagonal bands and ``dd_p`` the double
    increment of pair ``p``.  ``norms_out[s, b]`` receives ``x^T G x`` after
    step ``b`` (``G`` from ``gram_bands``); ``states_out`` (``(S, B, N)`` or
    empty) receives the states.  ``mode_span``/``pair_span`` (row ranges
    holding the nonzero band entries) are a hint used by the compiled kernel.
    """
    S, N = X.shape
    B = normals.shape[1]
    keep = states_out.shape[0] > 0
    x = X
    dbeta = np.sqrt(dt) * normals
    if diagonal:
        dd, pd = np.diag(d_det), np.diag(prefix)
    for b in range(B):
        db = dbeta[:, b, :]
        xi = db * amplitudes
        inner = np.einsum("sk,skn->sn", xi, _band_apply(mode_bands, x))
        if pair_index.shape[0]:
            k, l = pair_index[:, 0], pair_index[:, 1]
            prod = 0.5 * db[:, k] * db[:, l]
            prod = prod - 0.5 * dt * (k == l)
            w = pair_weights * prod
            inner += np.einsum("sp,spn->sn", w, _band_apply(pair_bands, x))
        if diagonal:
            x = dd * x + pd * inner
        else:
            x = x @ d_det.T + inner @ prefix.T
        norms_out[:, b] = np.einsum("sn,sn->s", x, _band_apply(gram_bands, x))
        if keep:
            states_out[:, b, :] = x
    X[...] = x
