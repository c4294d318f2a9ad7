"""Inner solvers: an epigraph interior-point method for max-min of concave
quadratics, and the bisection search for the power multiplier ``tau``."""

import json
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class Infeasible(ValueError):
    pass


class MaxIterations(RuntimeError):
    """Raised when an iterative solver hits its cap; ``report`` holds the best iterate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NoBracket(ValueError):
    pass


@dataclass
class MaxMinQpProblem:
    """maximize ``min_j a_j + 2 g_j^T z - z^T Q_j z`` s.t. ``z^T R z <= P`` and optional box.

    ``constants`` is ``(q,)``, ``linears`` ``(q, n)``, ``curvatures`` ``(q, n, n)``
    (PSD), ``power`` the PSD ``R``.  ``lower``/``upper`` may be ``None``.
    """

    constants: np.ndarray
    linears: np.ndarray
    curvatures: np.ndarray
    power: np.ndarray
    budget: float
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        self.constants = np.atleast_1d(np.asarray(self.constants, dtype=float))
        self.linears = np.atleast_2d(np.asarray(self.linears, dtype=float))
        self.curvatures = np.asarray(self.curvatures, dtype=float).reshape(
            self.constants.size, self.linears.shape[1], self.linears.shape[1]
        )
        self.power = np.asarray(self.power, dtype=float)
        if self.lower is not None:
            self.lower = np.asarray(self.lower, dtype=float).reshape(self.n)
        if self.upper is not None:
            self.upper = np.asarray(self.upper, dtype=float).reshape(self.n)
        if not self.budget > 0:
            raise Infeasible("power budget must be positive")

    @property
    def n(self):
        return self.linears.shape[1]

    def values(self, z):
        return self.constants + 2.0 * self.linears @ z - np.einsum("i,jik,k->j", z, self.curvatures, z)

    def objective(self, z):
        return float(np.min(self.values(z)))

    def violation(self, z):
        v = max(0.0, float(z @ self.power @ z) / self.budget - 1.0)
        if self.lower is not None:
            v = max(v, float(np.max(self.lower - z, initial=0.0)))
        if self.upper is not None:
            v = max(v, float(np.max(z - self.upper, initial=0.0)))
        return v


@dataclass
class SolverReport:
    x: np.ndarray
    objective: float
    iterations: int
    max_violation: float
    kkt_residual: float
    converged: bool = True


def _interior_anchor(p):
    """A strictly feasible point on the segment from 0 toward the box centre."""
    if p.lower is None and p.upper is None:
        return np.zeros(p.n)
    lo = p.lower if p.lower is not None else np.full(p.n, -np.inf)
    hi = p.upper if p.upper is not None else np.full(p.n, np.inf)
    if np.any(lo > 0) or np.any(hi < 0):
        raise Infeasible("the origin must lie in the box")
    mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), np.where(np.isfinite(hi), 0.5 * hi, 0.5 * lo))
    mid = np.where(np.isfinite(mid), mid, 0.0)
    pw = float(mid @ p.power @ mid)
    scale = 1.0 if pw <= 0.25 * p.budget else np.sqrt(0.25 * p.budget / pw)
    return scale * mid


def _dual_bound(p, R, lam_q, lam_p, lam_lo, lam_hi, lo, hi, has_lo, has_hi):
    """Lagrange dual value at the given multipliers: an upper bound on the optimum.

    ``lam_q`` is renormalized onto the simplex so the epigraph variable drops out.
    """
    lam_q = lam_q / lam_q.sum()
    n = p.n
    Q = np.einsum("j,jik->ik", lam_q, p.curvatures) + lam_p * R
    g = lam_q @ p.linears
    g2 = np.zeros(n)
    g2[has_lo] += 0.5 * lam_lo
    g2[has_hi] -= 0.5 * lam_hi
    g = g + g2
    const = float(lam_q @ p.constants) + lam_p - float(lam_lo @ lo[has_lo]) + float(lam_hi @ hi[has_hi])
    # sup_z const + 2 g^T z - z^T Q z
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            z = sla.solve(0.5 * (Q + Q.T), g, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return np.inf
    return const + float(g @ z)


def solve_maxmin_qp(p, tol=1e-8, x0=None, max_iter=500, trace=None):
    """Path-following log-barrier solve of the epigraph form.

    Variables are ``(z, t)``; constraints are ``t <= q_j(z)``, the normalized
    power constraint and the box.  Each outer stage centers
    ``-kappa t - sum log(-f_i)`` by damped Newton steps; the dual estimates
    ``lambda_i = 1 / (kappa (-f_i))`` certify a duality gap of ``m / kappa``.
    ``x0`` (feasible, possibly on the boundary) is pulled slightly toward an
    interior anchor to warm start.

    Returns a ``SolverReport``; raises ``MaxIterations`` carrying the last
    iterate if the gap has not reached ``tol`` after ``max_iter`` Newton steps.
    """
    n, q = p.n, p.constants.size
    lo = p.lower if p.lower is not None else np.full(n, -np.inf)
    hi = p.upper if p.upper is not None else np.full(n, np.inf)
    has_lo, has_hi = np.isfinite(lo), np.isfinite(hi)
    R = p.power / p.budget

    anchor = _interior_anchor(p)
    if x0 is None:
        z = anchor.copy()
    else:
        z = np.clip(np.asarray(x0, dtype=float), lo, hi)
        pw = float(z @ R @ z)
        if pw > 1.0:
            z *= 1.0 / np.sqrt(pw)
        z = 0.99 * z + 0.01 * anchor

    def constraint_values(z, t):
        return (
            t - p.values(z),
            float(z @ R @ z - 1.0),
            (lo - z)[has_lo],
            (z - hi)[has_hi],
        )

    def strictly_feasible(parts):
        fq, fp, flo, fhi = parts
        return np.all(fq < 0) and fp < 0 and np.all(flo < 0) and np.all(fhi < 0)

    def barrier_change(parts_old, z, dz, dt, kappa):
        # -kappa dt - sum log1p(df / f), with the increments df expanded
        # analytically so no cancellation occurs near the boundary
        fq, fp, flo, fhi = parts_old
        Qdz = np.einsum("jik,k->ji", p.curvatures, dz)
        dfq = dt - (2.0 * p.linears @ dz - 2.0 * Qdz @ z - Qdz @ dz)
        Rdz = R @ dz
        dfp = 2.0 * float(z @ Rdz) + float(dz @ Rdz)
        ratios = np.concatenate([dfq / fq, [dfp / fp], -dz[has_lo] / flo, dz[has_hi] / fhi])
        if np.any(ratios <= -1.0):
            return np.inf
        return -kappa * dt - float(np.sum(np.log1p(ratios)))

    qv = p.values(z)
    scale = max(1.0, abs(float(qv.min())))
    t = float(qv.min()) - scale
    if not strictly_feasible(constraint_values(z, t)):
        raise Infeasible("could not construct a strictly feasible start")
    m = q + 1 + int(has_lo.sum()) + int(has_hi.sum())
    kappa = m / (10.0 * scale)  # initial gap estimate is 10x the objective scale
    growth = 5.0

    def newton_system(z, t, kappa):
        fq, fp, flo, fhi = constraint_values(z, t)
        grad_q = 2.0 * (np.einsum("jik,k->ji", p.curvatures, z) - p.linears)  # d(t - q_j)/dz
        grad_p = 2.0 * (R @ z)
        iq, ip = 1.0 / -fq, 1.0 / -fp
        gz = grad_q.T @ iq + grad_p * ip
        gz[has_lo] -= 1.0 / -flo
        gz[has_hi] += 1.0 / -fhi
        grad = np.append(gz, -kappa + iq.sum())
        Hzz = 2.0 * np.einsum("j,jik->ik", iq, p.curvatures) + 2.0 * ip * R
        Hzz += (grad_q.T * iq**2) @ grad_q + ip**2 * np.outer(grad_p, grad_p)
        diag = np.zeros(n)
        diag[has_lo] += flo**-2
        diag[has_hi] += fhi**-2
        Hzz[np.diag_indices(n)] += diag
        hess = np.empty((n + 1, n + 1))
        hess[:n, :n] = Hzz
        hess[:n, n] = hess[n, :n] = grad_q.T @ iq**2
        hess[n, n] = float(np.sum(iq**2))
        return grad, hess

    it = 0
    gap = m / kappa
    decrement = np.inf
    while True:
        # centering by damped Newton
        decrement = np.inf
        while it < max_iter:
            grad, hess = newton_system(z, t, kappa)
            # symmetric diagonal equilibration keeps the solve accurate as kappa grows
            d = 1.0 / np.sqrt(np.maximum(np.diag(hess), 1e-300))
            scaled = hess * d[:, None] * d[None, :]
            try:
                # near the boundary the system is ill-conditioned by design; the
                # final certificate, not the solve, decides convergence
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    step = -d * sla.solve(scaled, d * grad, assume_a="pos", check_finite=False)
            except (np.linalg.LinAlgError, ValueError):
                step = -d * np.linalg.lstsq(scaled, d * grad, rcond=None)[0]
            previous, decrement = decrement, float(-grad @ step)
            it += 1
            if decrement <= 1e-10 or (decrement <= 1e-6 and decrement > 0.5 * previous):
                break  # centered, or stagnating at the round-off floor
            s, parts_old = 1.0, constraint_values(z, t)
            while s > 1e-6:
                if barrier_change(parts_old, z, s * step[:n], s * step[n], kappa) <= -0.25 * s * decrement:
                    break
                s *= 0.5
            if s <= 1e-6:
                break  # round-off floor; the decrement decides whether this counts as centered
            z, t = z + s * step[:n], t + s * step[n]
            if trace is not None:
                trace.write(json.dumps({"iter": it, "kappa": kappa, "decrement": decrement, "step": s, "t": t}) + "\n")
        gap = m / kappa
        target = 0.1 * tol * max(1.0, abs(t))
        if gap <= target * (1 + 1e-12) or it >= max_iter or decrement > 1e-3:
            break
        kappa = min(growth * kappa, m / target)

    fq, fp, flo, fhi = constraint_values(z, t)
    dual_bound = _dual_bound(p, R, 1.0 / (kappa * -fq), 1.0 / (kappa * -fp), 1.0 / (kappa * -flo),
                             1.0 / (kappa * -fhi), lo, hi, has_lo, has_hi)
    report_obj = p.objective(z)
    # self-concordant path-following bound: kappa (opt - t) <= m + (lam + sqrt m) lam / (1 - lam)
    lam = np.sqrt(max(decrement, 0.0))
    path_bound = t + (m + (lam + np.sqrt(m)) * lam / (1.0 - lam)) / kappa if lam < 1 else np.inf
    kkt = max(0.0, min(dual_bound, path_bound) - report_obj)
    converged = bool(kkt <= tol * max(1.0, abs(report_obj)))
    report = SolverReport(
        x=z,
        objective=report_obj,
        iterations=it,
        max_violation=p.violation(z),
        kkt_residual=kkt,
        converged=converged,
    )
    if not converged:
        raise MaxIterations(f"barrier method stopped with certified gap {kkt:.2e} after {it} Newton steps", report)
    return report


def bisection_tau(g, P, tol=1e-10, max_iter=200):
    """Find ``tau > 0`` with ``g(tau) = P`` for a decreasing ``g``.

    The upper end of the bracket doubles from 1 until ``g(tau_u) < P``.  If
    the bracket collapses to machine precision before ``tol`` is met, the
    upper end (``g <= P``) is returned.
    """
    g0 = g(0.0)
    if g0 <= P:
        raise NoBracket(f"g(0) = {g0:.6e} does not exceed P = {P:.6e}")
    tau_l, tau_u = 0.0, 1.0
    g_u = g(tau_u)
    doublings = 0
    while g_u >= P:
        tau_l, tau_u = tau_u, 2.0 * tau_u
        g_u = g(tau_u)
        doublings += 1
        if doublings > 2000:
            raise MaxIterations("could not bracket the power equation")
    if abs(g_u - P) <= tol * P:
        return tau_u
    for _ in range(max_iter):
        tau = 0.5 * (tau_l + tau_u)
        if tau <= tau_l or tau >= tau_u:
            return tau_u
        val = g(tau)
        if abs(val - P) <= tol * P:
            return tau
        if val > P:
            tau_l = tau
        else:
            tau_u = tau
    raise MaxIterations(f"bisection did not reach |g - P| <= {tol:g} P in {max_iter} steps")
