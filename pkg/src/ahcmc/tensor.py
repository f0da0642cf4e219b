"""Coordinate-component curvature kernels, vectorized over leading axes.

Derivative index comes first: ``dg[..., l, a, b] = d_l g_ab`` and
``ddg[..., m, l, a, b] = d_m d_l g_ab``.
"""
from __future__ import annotations

import numpy as np


def inverse(g: np.ndarray) -> np.ndarray:
    return np.linalg.inv(g)


def christoffel(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Gamma[..., k, i, j] of the Levi-Civita connection."""
    # lower[l, i, j] = d_i g_lj + d_j g_li - d_l g_ij
    lower = np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg) - dg
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, lower)


def christoffel_derivative(ginv: np.ndarray, dg: np.ndarray, ddg: np.ndarray) -> np.ndarray:
    """dGamma[..., m, k, i, j] = d_m Gamma^k_ij."""
    dginv = -np.einsum("...ka,...mab,...bl->...mkl", ginv, dg, ginv)
    lower = np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg) - dg
    dlower = (
        np.einsum("...milj->...mlij", ddg)
        + np.einsum("...mjli->...mlij", ddg)
        - ddg
    )
    return 0.5 * (
        np.einsum("...mkl,...lij->...mkij", dginv, lower)
        + np.einsum("...kl,...mlij->...mkij", ginv, dlower)
    )


def ricci(gamma: np.ndarray, dgamma: np.ndarray) -> np.ndarray:
    """Ricci tensor R_ij = d_k G^k_ij - d_j G^k_ik + G^k_kl G^l_ij - G^k_jl G^l_ik."""
    t1 = np.einsum("...kkij->...ij", dgamma)
    t2 = np.einsum("...jkik->...ij", dgamma)
    t3 = np.einsum("...kkl,...lij->...ij", gamma, gamma)
    t4 = np.einsum("...kjl,...lik->...ij", gamma, gamma)
    return t1 - t2 + t3 - t4


def scalar_curvature(ginv: np.ndarray, ric: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...ij->...", ginv, ric)
