"""Alternating outer loops for the three beamforming designs.

``run_mm``
    max-min rate; both blocks are solved as max-min quadratic programs.
``run_sr``
    sum rate with the amplitude box moved into a quadratic penalty; both
    blocks have closed forms.
``run_smm``
    soft max-min, ``min ln|sum_nu Pi_nu|``, with the same penalty scheme.
"""

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .matkit import hpd_solve
from .rates import (
    min_rate,
    penalty,
    soft_min_objective,
    sum_rate,
    transmit_power,
    user_rates,
)
from .subsolvers import MaxIterations, MaxMinQpProblem, NoBracket, bisection_tau, solve_maxmin_qp
from .surrogates import (
    baseband_power_real,
    holo_power,
    mm_baseband_surrogates,
    mm_holo_surrogates,
    smm_baseband_surrogates,
    smm_holo_vectorized,
    sr_baseband_surrogate,
    sr_holo_vectorized,
    stack_complex,
    unstack_complex,
)

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("iter", "objective", "min_rate_nats", "sum_rate_nats", "penalty", "rho", "wall_ms")


class AlgorithmError(RuntimeError):
    """An inner step failed; ``trace`` holds everything recorded so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class AlgorithmConfig:
    """Outer-loop settings shared by all three algorithms.

    ``rho0=None`` selects the automatic initial penalty: ``rho0_scale`` times
    the magnitude of the objective at the initial point divided by the initial
    penalty term.  The penalized loops stop once the penalty term is below
    ``penalty_stop`` and the penalized objective moved by less than
    ``objective_tol`` (relative) in the last iteration; ``objective_tol=None``
    drops the second condition.
    """

    power_budget: float
    c: float = 1.0
    rho0: float = None
    rho0_scale: float = 0.01
    rho_growth: float = 1.2
    rho_trigger: float = 0.9
    mm_objective_tol: float = 1e-3
    penalty_stop: float = 1e-2
    objective_tol: float = 1e-4
    max_iter_mm: int = 500
    max_iter_penalty: int = 2000
    inner_tol: float = 1e-8
    bisection_tol: float = 1e-12

    def __post_init__(self):
        problems = []
        if not self.power_budget > 0:
            problems.append("power_budget must be positive")
        if not 0 < self.c <= 1:
            problems.append("c must lie in (0, 1]")
        if self.rho0 is not None and not self.rho0 > 0:
            problems.append("rho0 must be positive")
        if not self.rho_growth > 1:
            problems.append("rho_growth must exceed 1")
        if not self.rho0_scale > 0:
            problems.append("rho0_scale must be positive")
        if self.objective_tol is not None and not self.objective_tol > 0:
            problems.append("objective_tol must be positive")
        for name in ("rho_trigger", "mm_objective_tol", "penalty_stop", "inner_tol", "bisection_tol"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if self.max_iter_mm < 1 or self.max_iter_penalty < 1:
            problems.append("iteration caps must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass
class RunTrace:
    """Per-iteration history of one run.  Row 0 is the initial point.

    ``wall_ms`` is cumulative since the start of the run.
    """

    algorithm: str
    rows: list = field(default_factory=list)
    converged: bool = False
    hit_cap: bool = False
    projection_gap: float = 0.0
    power_rescale: float = 1.0
    surrogate_regressions: int = 0

    def append(self, it, objective, W, X, H, sigma, pen, rho, t0):
        rates = user_rates(W, X, H, sigma)
        self.rows.append(
            (it, float(objective), float(rates.min()), float(rates.sum()), float(pen), float(rho),
             1e3 * (time.perf_counter() - t0))
        )

    @property
    def iterations(self):
        return max(1, len(self.rows) - 1)

    def column(self, name):
        return np.array([r[TRACE_COLUMNS.index(name)] for r in self.rows])

    def constant_rho_segments(self):
        """Index runs of consecutive rows sharing the same ``rho``."""
        segments, start = [], 0
        rhos = self.column("rho")
        for i in range(1, len(rhos) + 1):
            if i == len(rhos) or rhos[i] != rhos[start]:
                segments.append(slice(start, i))
                start = i
        return segments

    def to_csv(self, fh=None):
        out = fh if fh is not None else io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.rows:
            writer.writerow([r[0]] + [repr(v) for v in r[1:]])
        return out.getvalue() if fh is None else None


class RunResult(NamedTuple):
    W: np.ndarray
    X: np.ndarray
    trace: RunTrace


class ClosedFormStep(NamedTuple):
    value: np.ndarray
    branch: str  # "free" or "tau"
    tau: float
    power: float


def project_amplitudes(x, bounds):
    """Clamp ``x`` (``vec(X)`` order) to ``[0, mu]``, the nearest point of the box."""
    return np.clip(np.asarray(x, dtype=float), 0.0, bounds.flat)


def init_point(bounds, P, rng, n_users, D):
    """Random feasible ``(W0, X0, chi0)``.

    ``X0`` is uniform in ``[0, mu]``, ``W0`` complex Gaussian rescaled to full
    power ``P`` and ``chi0`` a clamped ``+-0.1 mu`` perturbation of ``vec(X0)``.
    """
    if not P > 0:
        raise ValueError("P must be positive")
    mu = bounds.mu
    X0 = rng.uniform(0.0, 1.0, mu.shape) * mu
    K = mu.shape[1]
    W0 = (rng.standard_normal((n_users, K, D)) + 1j * rng.standard_normal((n_users, K, D))) / np.sqrt(2)
    pw = transmit_power(W0, X0)
    if pw > 0:
        W0 *= np.sqrt(P / pw)
    flat = bounds.flat
    chi0 = np.clip(X0.reshape(-1, order="F") + rng.uniform(-0.1, 0.1, flat.size) * flat, 0.0, flat)
    return W0, X0, chi0


# --------------------------------------------------------------------------
# closed-form block updates
# --------------------------------------------------------------------------


def _baseband_closed_form(surrogate, X, P, tol):
    # stationary point of 2 Re tr(B W) - tr(W^H (C + tau X^T X) W) per user
    XtX = X.T @ X
    B_h = surrogate.linear.conj().transpose(0, 2, 1)

    def solve(tau):
        return np.array([hpd_solve(C + tau * XtX, Bh) for C, Bh in zip(surrogate.curvature, B_h)])

    def power(tau):
        return transmit_power(solve(tau), X)

    W = solve(0.0)
    p0 = transmit_power(W, X)
    if p0 <= P:
        return ClosedFormStep(W, "free", 0.0, p0)
    tau = bisection_tau(power, P, tol=tol)
    W = solve(tau)
    return ClosedFormStep(W, "tau", tau, transmit_power(W, X))


def closed_form_baseband_sr(surrogate, X, P, tol=1e-12):
    """Maximize the sum-rate minorant over ``W`` under ``sum ||X W_nu||^2 <= P``."""
    return _baseband_closed_form(surrogate, X, P, tol)


def closed_form_baseband_smm(surrogate, X, P, tol=1e-12):
    """Minimize the soft max-min majorant over ``W``; users share one ``tau``."""
    return _baseband_closed_form(surrogate, X, P, tol)


def _holo_closed_form(program, chi, rho, P, tol):
    # x(tau) = (D2 + rho I + tau D1)^{-1} (b + rho chi), diagonalized once:
    # with S = D2 + rho I = L L^T and L^{-1} D1 L^{-T} = Q diag(lam) Q^T,
    # x(tau) = L^{-T} Q (u / (1 + tau lam)) where u = Q^T L^{-1} r.
    if not rho > 0:
        raise ValueError("rho must be positive")
    n = program.b.size
    S = program.D2 + rho * np.eye(n)
    L = sla.cholesky(S, lower=True)
    r = program.b + rho * np.asarray(chi)
    half = sla.solve_triangular(L, program.D1, lower=True)
    E = sla.solve_triangular(L, half.T, lower=True)
    lam, Q = sla.eigh(0.5 * (E + E.T))
    lam = np.clip(lam, 0.0, None)
    u = Q.T @ sla.solve_triangular(L, r, lower=True)

    def power(tau):
        return float(np.sum(lam * (u / (1.0 + tau * lam)) ** 2))

    def x_of(tau):
        return sla.solve_triangular(L.T, Q @ (u / (1.0 + tau * lam)), lower=False)

    if power(0.0) <= P:
        x = x_of(0.0)
        return ClosedFormStep(x, "free", 0.0, float(x @ program.D1 @ x))
    tau = bisection_tau(power, P, tol=tol)
    x = x_of(tau)
    return ClosedFormStep(x, "tau", tau, float(x @ program.D1 @ x))


def closed_form_holo_sr(program, chi, rho, P, tol=1e-12):
    """Maximize the penalized sum-rate minorant over ``vec(X)`` under the power budget."""
    return _holo_closed_form(program, chi, rho, P, tol)


def closed_form_holo_smm(program, chi, rho, P, tol=1e-12):
    """Minimize the penalized soft max-min majorant over ``vec(X)`` under the power budget."""
    return _holo_closed_form(program, chi, rho, P, tol)


# --------------------------------------------------------------------------
# outer loops
# --------------------------------------------------------------------------


def _prepare(channels, geom, bounds, cfg, rng, init):
    H, sigma = channels.H, channels.noise_power
    if geom is not None and bounds.mu.shape != (geom.n_elements, geom.K):
        raise ValueError("bounds do not match the geometry")
    if bounds.mu.shape[0] != channels.n_elements:
        raise ValueError("bounds and channels disagree on the number of elements")
    if init is None:
        init = init_point(bounds, cfg.power_budget, rng, channels.n_users, channels.D)
    W, X, chi = (np.array(a, copy=True) for a in init)
    return H, sigma, W, X, chi


def _finalize(W, X, bounds, P, trace):
    """Project ``X`` into the box and rescale ``W`` if the projection broke the budget."""
    x = X.reshape(-1, order="F")
    xp = project_amplitudes(x, bounds)
    trace.projection_gap = float(np.sum((x - xp) ** 2))
    Xp = xp.reshape(X.shape, order="F")
    pw = transmit_power(W, Xp)
    if pw > P:
        trace.power_rescale = float(np.sqrt(P / pw))
        W = W * trace.power_rescale
    return W, Xp


def _mm_baseband_step(W, X, H, sigma, P, tol, solver_log=None):
    sur = mm_baseband_surrogates(W, X, H, sigma)
    parts = [s.to_real() for s in sur]
    prob = MaxMinQpProblem(
        constants=[a for a, _, _ in parts],
        linears=[g for _, g, _ in parts],
        curvatures=[Q for _, _, Q in parts],
        power=baseband_power_real(X, W.shape[0], W.shape[2]),
        budget=P,
    )
    rep = solve_maxmin_qp(prob, tol=tol, x0=stack_complex(W), trace=solver_log)
    W_new = unstack_complex(rep.x, W.shape)
    before = min(s(W) for s in sur)
    after = min(s(W_new) for s in sur)
    return (W_new, after) if after >= before else (W, before), after < before


def _mm_holo_step(W, X, H, sigma, bounds, P, tol, solver_log=None):
    sur = [s.vectorize() for s in mm_holo_surrogates(W, X, H, sigma)]
    _, D1 = holo_power(W, X.shape[0])
    mu = bounds.flat
    free = mu > 1e-12  # elements with mu = 0 are pinned at 0 and drop out
    idx = np.flatnonzero(free)
    prob = MaxMinQpProblem(
        constants=[s.constant for s in sur],
        linears=[s.b[idx] for s in sur],
        curvatures=[s.D[np.ix_(idx, idx)] for s in sur],
        power=D1[np.ix_(idx, idx)],
        budget=P,
        lower=np.zeros(idx.size),
        upper=mu[idx],
    )
    x_old = X.reshape(-1, order="F")
    rep = solve_maxmin_qp(prob, tol=tol, x0=x_old[idx], trace=solver_log)
    x_new = np.zeros_like(x_old)
    x_new[idx] = np.clip(rep.x, 0.0, mu[idx])
    before = min(s(x_old) for s in sur)
    after = min(s(x_new) for s in sur)
    if after < before:
        return X, True
    return x_new.reshape(X.shape, order="F"), False


def run_mm(channels, geom, bounds, cfg, rng=None, init=None, solver_log=None, callback=None):
    """Alternate max-min quadratic programs over ``W`` and ``X``.

    Stops when the min rate changes by less than ``cfg.mm_objective_tol``.
    A block update that would lower its own surrogate (possible only through
    solver round-off) is rejected and the previous block kept.  Inner solver
    iterates go to ``solver_log`` as JSON lines when it is given, and
    ``callback(it, W, X)`` sees every iterate including the initial one.
    """
    H, sigma, W, X, _ = _prepare(channels, geom, bounds, cfg, rng, init)
    P = cfg.power_budget
    trace = RunTrace("mm")
    t0 = time.perf_counter()
    f = min_rate(W, X, H, sigma)
    trace.append(0, f, W, X, H, sigma, 0.0, 0.0, t0)
    if callback is not None:
        callback(0, W, X)
    for it in range(1, cfg.max_iter_mm + 1):
        try:
            (W, _), reg_w = _mm_baseband_step(W, X, H, sigma, P, cfg.inner_tol, solver_log)
            X, reg_x = _mm_holo_step(W, X, H, sigma, bounds, P, cfg.inner_tol, solver_log)
        except MaxIterations as exc:
            raise AlgorithmError(f"mm iteration {it}: {exc}", trace) from exc
        trace.surrogate_regressions += int(reg_w) + int(reg_x)
        f_new = min_rate(W, X, H, sigma)
        trace.append(it, f_new, W, X, H, sigma, 0.0, 0.0, t0)
        if callback is not None:
            callback(it, W, X)
        if abs(f_new - f) < cfg.mm_objective_tol:
            trace.converged = True
            break
        f = f_new
    else:
        trace.hit_cap = True
        log.warning("mm stopped at the iteration cap (%d)", cfg.max_iter_mm)
    return RunResult(W, X, trace)


def _run_penalized(kind, channels, geom, bounds, cfg, rng, init, callback):
    H, sigma, W, X, chi = _prepare(channels, geom, bounds, cfg, rng, init)
    P, c = cfg.power_budget, cfg.c
    n_el, K = X.shape
    trace = RunTrace(kind)
    t0 = time.perf_counter()

    if kind == "sr":
        def objective(W, X, chi, rho):
            return sum_rate(W, X, H, sigma) - rho * penalty(X, chi)
    else:
        def objective(W, X, chi, rho):
            return soft_min_objective(W, X, H, sigma, c) + rho * penalty(X, chi)

    pen = penalty(X, chi)
    if cfg.rho0 is not None:
        rho = cfg.rho0
    elif pen <= 0:
        rho = 1.0
    elif kind == "sr":
        rho = max(cfg.rho0_scale * sum_rate(W, X, H, sigma) / pen, 1e-3)
    else:
        rho = max(cfg.rho0_scale * abs(soft_min_objective(W, X, H, sigma, c)) / pen, 1e-3)
    trace.append(0, objective(W, X, chi, rho), W, X, H, sigma, pen, rho, t0)
    if callback is not None:
        callback(0, W, X, chi, rho)
    sign = 1.0 if kind == "sr" else -1.0  # +1: maximize, -1: minimize

    for it in range(1, cfg.max_iter_penalty + 1):
        try:
            if kind == "sr":
                sur = sr_baseband_surrogate(W, X, H, sigma)
                step = closed_form_baseband_sr(sur, X, P, cfg.bisection_tol)
            else:
                sur = smm_baseband_surrogates(W, X, H, sigma, c)
                step = closed_form_baseband_smm(sur, X, P, cfg.bisection_tol)
            if sign * (sur(step.value) - sur(W)) < -1e-9 * max(1.0, abs(sur(W))):
                trace.surrogate_regressions += 1
            W = step.value

            if kind == "sr":
                prog = sr_holo_vectorized(W, X, H, sigma)
                hstep = closed_form_holo_sr(prog, chi, rho, P, cfg.bisection_tol)
            else:
                prog = smm_holo_vectorized(W, X, H, sigma, c)
                hstep = closed_form_holo_smm(prog, chi, rho, P, cfg.bisection_tol)
            x_old = X.reshape(-1, order="F")
            if sign * (prog.penalized(hstep.value, chi, rho) - prog.penalized(x_old, chi, rho)) < -1e-9 * max(
                1.0, abs(prog.penalized(x_old, chi, rho))
            ):
                trace.surrogate_regressions += 1
            X = hstep.value.reshape(n_el, K, order="F")
        except (MaxIterations, NoBracket, np.linalg.LinAlgError) as exc:
            raise AlgorithmError(f"{kind} iteration {it}: {exc}", trace) from exc

        chi = project_amplitudes(hstep.value, bounds)
        value = objective(W, X, chi, rho)  # at the rho in force during this iteration
        pen_new = penalty(X, chi)
        trace.append(it, value, W, X, H, sigma, pen_new, rho, t0)
        if callback is not None:
            callback(it, W, X, chi, rho)
        small = pen_new < cfg.penalty_stop
        if cfg.objective_tol is not None:
            prev = trace.rows[-2][1]
            small = small and abs(value - prev) < cfg.objective_tol * max(1.0, abs(value))
        if small:
            trace.converged = True
            break
        if pen_new > cfg.rho_trigger * pen:
            rho *= cfg.rho_growth
        pen = pen_new
    else:
        trace.hit_cap = True
        log.warning("%s stopped at the iteration cap (%d)", kind, cfg.max_iter_penalty)

    W, X = _finalize(W, X, bounds, P, trace)
    return RunResult(W, X, trace)


def run_sr(channels, geom, bounds, cfg, rng=None, init=None, callback=None):
    """Penalized sum-rate maximization with closed-form block updates.

    ``callback(it, W, X, chi, rho)`` is invoked after every iteration.
    """
    return _run_penalized("sr", channels, geom, bounds, cfg, rng, init, callback)


def run_smm(channels, geom, bounds, cfg, rng=None, init=None, callback=None):
    """Penalized soft max-min (``min ln|sum Pi_nu|``) with closed-form block updates.

    ``callback(it, W, X, chi, rho)`` is invoked after every iteration.
    """
    return _run_penalized("smm", channels, geom, bounds, cfg, rng, init, callback)
