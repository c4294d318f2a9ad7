"""Tight quadratic minorants/majorants of the log-det objectives.

Two generic bounds drive everything:

``minorant_logdet``
    lower bound of ``ln|I + [V]^2 Y^{-1}|`` that is affine in ``([V]^2 + Y)``
    apart from a linear term in ``V``;
``majorant_logdet_pi``
    upper bound of ``ln|sum_nu (I - V_nu^H Y_nu^{-1} V_nu)|`` affine in
    ``(V_nu, Y_nu)``.

The per-algorithm builders specialize them to the baseband step (variable
``W``) and the holographic step (variable ``X``), returning either a
``BasebandSurrogate`` or a ``HoloSurrogate`` whose ``vectorize`` method gives
the real quadratic form over ``vec(X)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .matkit import (
    NotPositiveDefinite,
    complex_to_real_form,
    gram,
    hermitian_part,
    hpd_inv,
    logdet_hpd,
    vec,
)
from .rates import effective_links


class SingularY(NotPositiveDefinite):
    pass


class DomainViolation(ValueError):
    pass


def _real_trace(A):
    return float(np.real(np.trace(A)))


# --------------------------------------------------------------------------
# generic bounds
# --------------------------------------------------------------------------


@dataclass
class LogdetMinorant:
    """``const + 2 Re<linear, V> - <multiplier, [V]^2 + Y>``."""

    const: float
    linear: np.ndarray
    multiplier: np.ndarray

    def __call__(self, V, Y):
        return float(
            self.const
            + 2.0 * np.real(np.vdot(self.linear, V))
            - np.real(np.vdot(self.multiplier, gram(V) + Y))
        )


def minorant_logdet(V_bar, Y_bar):
    """Tight minorant of ``ln|I + [V]^2 Y^{-1}|`` at ``(V_bar, Y_bar)``."""
    try:
        Y_inv = hpd_inv(Y_bar, jitter=0.0)
        VV = gram(V_bar)
        full_inv = hpd_inv(VV + Y_bar, jitter=0.0)
        rate = logdet_hpd(Y_bar + VV) - logdet_hpd(Y_bar)
    except NotPositiveDefinite as exc:
        raise SingularY(str(exc)) from exc
    return LogdetMinorant(
        const=rate - _real_trace(VV @ Y_inv),
        linear=Y_inv @ V_bar,
        multiplier=hermitian_part(Y_inv - full_inv),
    )


def pi_matrix(Vs, Ys):
    """``sum_nu (I - V_nu^H Y_nu^{-1} V_nu)``."""
    D = Vs[0].shape[1]
    total = np.zeros((D, D), dtype=complex)
    for V, Y in zip(Vs, Ys):
        total += np.eye(D) - V.conj().T @ np.linalg.solve(Y, V)
    return hermitian_part(total)


@dataclass
class PiMajorant:
    """``const - 2 Re sum<linear_nu, V_nu> + sum<weight_nu, Y_nu>``."""

    const: float
    linear: list
    weight: list
    pi_inv: np.ndarray = field(repr=False)

    def __call__(self, Vs, Ys):
        val = self.const
        for L, C, V, Y in zip(self.linear, self.weight, Vs, Ys):
            val += -2.0 * np.real(np.vdot(L, V)) + np.real(np.vdot(C, Y))
        return float(val)


def majorant_logdet_pi(V_bars, Y_bars):
    """Tight majorant of ``ln|Pi(V, Y)|`` at ``(V_bar, Y_bar)``.

    Requires ``[V_bar_nu]^2 < Y_bar_nu`` for every ``nu``.
    """
    Y_invs = []
    for V, Y in zip(V_bars, Y_bars):
        gap = np.linalg.eigvalsh(hermitian_part(Y - gram(V)))
        if gap[0] <= 0:
            raise DomainViolation("[V]^2 must be strictly below Y")
        Y_invs.append(hpd_inv(Y, jitter=0.0))
    Pi = pi_matrix(V_bars, Y_bars)
    try:
        Pi_inv = hpd_inv(Pi, jitter=0.0)
        const = logdet_hpd(Pi)
    except NotPositiveDefinite as exc:
        raise DomainViolation(f"Pi is not positive definite: {exc}") from exc
    linear, weight = [], []
    for V, Yi in zip(V_bars, Y_invs):
        YiV = Yi @ V
        const += _real_trace(Pi_inv @ V.conj().T @ YiV)
        linear.append(YiV @ Pi_inv)
        weight.append(hermitian_part(YiV @ Pi_inv @ YiV.conj().T))
    return PiMajorant(const=float(const), linear=linear, weight=weight, pi_inv=Pi_inv)


# --------------------------------------------------------------------------
# quadratic containers
# --------------------------------------------------------------------------


def stack_complex(W):
    """Real vector ``[Re w; Im w]`` of the C-order flattening of ``W``."""
    w = np.asarray(W).ravel()
    return np.concatenate([w.real, w.imag])


def unstack_complex(z, shape):
    n = z.size // 2
    return (z[:n] + 1j * z[n:]).reshape(shape)


def _block_curvature(curvature, D):
    # index (nu, k, d) in C order -> block_diag_nu kron(C_nu, I_D)
    n_u, K, _ = curvature.shape
    big = np.zeros((n_u * K * D, n_u * K * D), dtype=complex)
    eye = np.eye(D)
    for nu in range(n_u):
        s = slice(nu * K * D, (nu + 1) * K * D)
        big[s, s] = np.kron(curvature[nu], eye)
    return big


@dataclass
class BasebandSurrogate:
    """Quadratic in the baseband precoders.

    ``value(W) = constant + sign * (2 Re sum_nu tr(B_nu W_nu) - sum_nu tr(W_nu^H C_nu W_nu))``

    with ``linear`` holding ``B_nu`` (``(N_u, D, K)``) and ``curvature``
    holding ``C_nu`` (``(N_u, K, K)``).  ``sign=+1`` is a concave minorant to
    maximize, ``sign=-1`` a convex majorant to minimize.
    """

    constant: float
    linear: np.ndarray
    curvature: np.ndarray
    sign: int = 1

    def __call__(self, W):
        lin = np.real(np.einsum("udk,ukd->", self.linear, W))
        quad = np.real(np.einsum("ukd,ukl,uld->", W.conj(), self.curvature, W))
        return float(self.constant + self.sign * (2.0 * lin - quad))

    def to_real(self):
        """``(a, g, Q)`` with ``value = a + sign * (2 g^T z - z^T Q z)`` for ``z = stack_complex(W)``."""
        D = self.linear.shape[1]
        beta = self.linear.transpose(0, 2, 1).ravel()
        g = np.concatenate([beta.real, -beta.imag])
        Q = complex_to_real_form(_block_curvature(self.curvature, D))
        return self.constant, g, 0.5 * (Q + Q.T)


def baseband_power_real(X, n_users, D):
    """Real ``R`` with ``z^T R z = sum_nu ||X W_nu||^2``."""
    K = X.shape[1]
    XtX = X.T @ X
    curv = np.broadcast_to(XtX, (n_users, K, K))
    R = complex_to_real_form(_block_curvature(np.asarray(curv, dtype=complex), D))
    return 0.5 * (R + R.T)


@dataclass
class VectorSurrogate:
    """``constant + sign * (2 b^T x - x^T D x)`` over ``x = vec(X)``."""

    constant: float
    b: np.ndarray
    D: np.ndarray
    sign: int = 1

    def __call__(self, x):
        x = np.asarray(x).reshape(-1, order="F")
        return float(self.constant + self.sign * (2.0 * self.b @ x - x @ self.D @ x))


@dataclass
class HoloSurrogate:
    """Matrix-form quadratic in the amplitude matrix ``X``.

    ``value(X) = constant + sign * (2 Re tr(B X) - sum_j tr(C_j X A_j X^T))``
    """

    constant: float
    B: np.ndarray
    terms: list
    sign: int = 1

    def __call__(self, X):
        lin = np.real(np.trace(self.B @ X))
        quad = sum(_real_trace(C @ X @ A @ X.T) for C, A in self.terms)
        return float(self.constant + self.sign * (2.0 * lin - quad))

    def vectorize(self):
        b = vec(np.real(self.B.T))
        D = sum(np.real(np.kron(A.T, C)) for C, A in self.terms)
        return VectorSurrogate(self.constant, b, 0.5 * (D + D.T), self.sign)


def holo_power(W, n_elements):
    """``A = sum_nu [W_nu]^2`` and ``D1 = Re(A^T) kron I`` so that ``vec(X)^T D1 vec(X) = sum ||X W_nu||^2``."""
    A = np.einsum("ukd,uld->kl", W, W.conj())
    D1 = np.kron(np.real(A.T), np.eye(n_elements))
    return A, 0.5 * (D1 + D1.T)


@dataclass
class HoloProgram:
    """Vectorized holographic step: surrogate, its matrix form and the power matrix ``D1``."""

    surrogate: VectorSurrogate
    matrix_form: HoloSurrogate
    D1: np.ndarray

    @property
    def b(self):
        return self.surrogate.b

    @property
    def D2(self):
        return self.surrogate.D

    @property
    def constant(self):
        return self.surrogate.constant

    def penalized(self, x, chi, rho):
        """Surrogate with the penalty attached in the direction of the surrogate's sense."""
        x = np.asarray(x).reshape(-1, order="F")
        return self.surrogate(x) - self.surrogate.sign * rho * float(np.sum((x - chi) ** 2))


# --------------------------------------------------------------------------
# max-min (and sum-rate) surrogates built on the minorant
# --------------------------------------------------------------------------


def mm_baseband_surrogates(W, X, H, sigma):
    """Per-user concave minorants of ``r_nu(., X)`` at ``W``."""
    n_u, K, D = W.shape
    V = effective_links(W, X, H)
    out = []
    for nu in range(n_u):
        H1 = H[nu] @ X
        Y = sigma * np.eye(D) + sum(gram(V[nu, mu]) for mu in range(n_u) if mu != nu)
        m = minorant_logdet(V[nu, nu], Y)
        linear = np.zeros((n_u, D, K), dtype=complex)
        linear[nu] = m.linear.conj().T @ H1
        Ct = hermitian_part(H1.conj().T @ m.multiplier @ H1)
        out.append(
            BasebandSurrogate(
                constant=m.const - sigma * _real_trace(m.multiplier),
                linear=linear,
                curvature=np.broadcast_to(Ct, (n_u, K, K)).copy(),
                sign=1,
            )
        )
    return out


def mm_holo_surrogates(W, X, H, sigma):
    """Per-user concave minorants of ``r_nu(W, .)`` at ``X`` (``W`` is the new baseband)."""
    n_u, K, D = W.shape
    A, _ = holo_power(W, 1)
    V = effective_links(W, X, H)
    out = []
    for nu in range(n_u):
        Y = sigma * np.eye(D) + sum(gram(V[nu, mu]) for mu in range(n_u) if mu != nu)
        m = minorant_logdet(V[nu, nu], Y)
        B = W[nu] @ m.linear.conj().T @ H[nu]
        Ct = hermitian_part(H[nu].conj().T @ m.multiplier @ H[nu])
        out.append(HoloSurrogate(m.const - sigma * _real_trace(m.multiplier), B, [(Ct, A)], sign=1))
    return out


def sr_baseband_surrogate(W, X, H, sigma):
    """Sum-rate minorant with the shared curvature ``sum_nu C_nu``."""
    per_user = mm_baseband_surrogates(W, X, H, sigma)
    n_u, K, _ = W.shape
    C = sum(s.curvature[0] for s in per_user)
    return BasebandSurrogate(
        constant=sum(s.constant for s in per_user),
        linear=sum(s.linear for s in per_user),
        curvature=np.broadcast_to(C, (n_u, K, K)).copy(),
        sign=1,
    )


def sr_holo_vectorized(W, X, H, sigma):
    """Vectorized sum-rate minorant over ``vec(X)`` plus the power matrix."""
    per_user = mm_holo_surrogates(W, X, H, sigma)
    A, D1 = holo_power(W, X.shape[0])
    matrix_form = HoloSurrogate(
        constant=sum(s.constant for s in per_user),
        B=sum(s.B for s in per_user),
        terms=[(sum(s.terms[0][0] for s in per_user), A)],
        sign=1,
    )
    return HoloProgram(matrix_form.vectorize(), matrix_form, D1)


# --------------------------------------------------------------------------
# soft max-min surrogates built on the majorant
# --------------------------------------------------------------------------


def _soft_points(V, sigma, c):
    n_u, _, D, _ = V.shape
    Vs, Ys = [], []
    for nu in range(n_u):
        own = gram(V[nu, nu])
        interf = sigma * np.eye(D) + sum(gram(V[nu, mu]) for mu in range(n_u) if mu != nu)
        Vs.append(V[nu, nu])
        Ys.append(hermitian_part(own + c * interf))
    return Vs, Ys


def smm_baseband_surrogates(W, X, H, sigma, c):
    """Convex majorant of ``ln|Pi(., X)|`` at ``W`` (``sign=-1``)."""
    n_u, K, D = W.shape
    V = effective_links(W, X, H)
    m = majorant_logdet_pi(*_soft_points(V, sigma, c))
    H1 = [H[nu] @ X for nu in range(n_u)]
    own_curv = [hermitian_part(H1[nu].conj().T @ m.weight[nu] @ H1[nu]) for nu in range(n_u)]
    total = sum(own_curv)
    curvature = np.array([own_curv[nu] + c * (total - own_curv[nu]) for nu in range(n_u)])
    linear = np.array([m.linear[nu].conj().T @ H1[nu] for nu in range(n_u)])
    const = m.const + c * sigma * sum(_real_trace(C) for C in m.weight)
    return BasebandSurrogate(const, linear, curvature, sign=-1)


def smm_holo_vectorized(W, X, H, sigma, c):
    """Vectorized convex majorant of ``ln|Pi(W, .)|`` at ``X`` plus the power matrix."""
    n_u, K, D = W.shape
    V = effective_links(W, X, H)
    m = majorant_logdet_pi(*_soft_points(V, sigma, c))
    grams = np.einsum("ukd,uld->ukl", W, W.conj())
    A_total = grams.sum(axis=0)
    B = sum(W[nu] @ m.linear[nu].conj().T @ H[nu] for nu in range(n_u))
    terms = []
    for nu in range(n_u):
        Ct = hermitian_part(H[nu].conj().T @ m.weight[nu] @ H[nu])
        A_nu = grams[nu] + c * (A_total - grams[nu])
        terms.append((Ct, A_nu))
    const = m.const + c * sigma * sum(_real_trace(C) for C in m.weight)
    matrix_form = HoloSurrogate(const, B, terms, sign=-1)
    _, D1 = holo_power(W, X.shape[0])
    return HoloProgram(matrix_form.vectorize(), matrix_form, D1)
