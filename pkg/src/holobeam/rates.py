"""Per-user log-det rates and every objective built from them.

Shapes used throughout: ``W`` is ``(N_u, K, D)`` complex, ``X`` is
``(M^2, K)`` real and ``H`` is ``(N_u, D, M^2)`` complex.  Rates are in nats.
"""

import numpy as np

from .matkit import NotPositiveDefinite, gram, hermitian_part, hpd_solve, logdet_hpd

LN2 = np.log(2.0)


class SingularPi(NotPositiveDefinite):
    pass


def effective_links(W, X, H):
    """``V[nu, nu'] = H_nu X W_nu'`` with shape ``(N_u, N_u, D, D)``."""
    HX = np.einsum("udn,nk->udk", H, X)
    return np.einsum("udk,vke->uvde", HX, W)


def _covariances(V, sigma):
    """Received covariance ``S_nu = sum_nu' [V_nu nu']^2 + sigma I`` per user."""
    n_u, _, D, _ = V.shape
    S = np.einsum("uvde,uvfe->udf", V, V.conj())
    return S + sigma * np.eye(D)


def interference_cov(W, X, H, sigma, nu):
    """Interference-plus-noise covariance ``G_nu`` of user ``nu``."""
    D = H.shape[1]
    G = sigma * np.eye(D, dtype=complex)
    for mu in range(W.shape[0]):
        if mu != nu:
            G = G + gram(H[nu] @ X @ W[mu])
    return G


def user_rates(W, X, H, sigma, c=1.0):
    """All scaled rates ``ln|I + (1/c)[V_nu]^2 G_nu^{-1}|`` as a length-``N_u`` array."""
    if not 0 < c <= 1:
        raise ValueError("c must lie in (0, 1]")
    V = effective_links(W, X, H)
    S = _covariances(V, sigma)
    rates = np.empty(W.shape[0])
    for nu in range(W.shape[0]):
        own = gram(V[nu, nu])
        G = S[nu] - own
        rates[nu] = logdet_hpd(G + own / c) - logdet_hpd(G)
    return np.maximum(rates, 0.0)


def user_rate(W, X, H, sigma, nu):
    return float(user_rates(W, X, H, sigma)[nu])


def scaled_user_rate(W, X, H, sigma, nu, c):
    return float(user_rates(W, X, H, sigma, c)[nu])


def min_rate(W, X, H, sigma):
    return float(np.min(user_rates(W, X, H, sigma)))


def sum_rate(W, X, H, sigma):
    return float(np.sum(user_rates(W, X, H, sigma)))


def scaled_pis(W, X, H, sigma, c):
    """All ``Pi_nu = I - V^H ([V]^2 + c G)^{-1} V``, shape ``(N_u, D, D)``."""
    if not 0 < c <= 1:
        raise ValueError("c must lie in (0, 1]")
    V = effective_links(W, X, H)
    S = _covariances(V, sigma)
    n_u, D = W.shape[0], H.shape[1]
    out = np.empty((n_u, D, D), dtype=complex)
    for nu in range(n_u):
        Vn = V[nu, nu]
        own = gram(Vn)
        Y = own + c * (S[nu] - own)
        out[nu] = hermitian_part(np.eye(D) - Vn.conj().T @ hpd_solve(Y, Vn))
    return out


def scaled_pi(W, X, H, sigma, nu, c):
    return scaled_pis(W, X, H, sigma, c)[nu]


def pi_sum(W, X, H, sigma, c):
    return scaled_pis(W, X, H, sigma, c).sum(axis=0)


def soft_min_objective(W, X, H, sigma, c):
    """``ln|sum_nu Pi_nu|``; its negative is a soft approximation of the scaled min rate."""
    P = pi_sum(W, X, H, sigma, c)
    try:
        return logdet_hpd(P)
    except NotPositiveDefinite as exc:
        raise SingularPi(str(exc)) from exc


def penalty(X, chi):
    x = np.asarray(X).reshape(-1, order="F")
    return float(np.sum((x - chi) ** 2))


def _check_rho(rho):
    if not rho > 0:
        raise ValueError("penalty factor rho must be positive")


def penalized_sum(W, X, chi, rho, H, sigma):
    """Sum rate minus ``rho ||vec X - chi||^2`` (to be maximized)."""
    _check_rho(rho)
    return sum_rate(W, X, H, sigma) - rho * penalty(X, chi)


def penalized_soft(W, X, chi, rho, H, sigma, c):
    """Soft max-min objective plus ``rho ||vec X - chi||^2`` (to be minimized)."""
    _check_rho(rho)
    return soft_min_objective(W, X, H, sigma, c) + rho * penalty(X, chi)


def transmit_power(W, X):
    """``sum_nu ||X W_nu||^2``."""
    return float(np.sum(np.abs(np.einsum("nk,ukd->und", X, W)) ** 2))


def nats_to_bits(r):
    return np.asarray(r) / LN2
