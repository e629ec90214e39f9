"""Entropic optimal transport between exploration and demonstration states.

The cost between two states is one minus the cosine similarity of their
feature vectors, so entries live in [0, 2]. The coupling is solved by
Sinkhorn iteration in the log domain (stabilized dual-potential updates,
with an annealed warm start so small regularization strengths converge
quickly). Per-state rewards are the negated, scaled rows of plan * cost.

``exact_ot_oracle`` solves the unregularized problem with an LP solver and
exists purely as an independent check on the Sinkhorn path; it is kept
deliberately separate from it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

DEFAULT_EPSILON = 0.05
DEFAULT_MAX_ITERS = 1000
DEFAULT_TOL = 1e-6

ORACLE_MAX_CELLS = 400


class OTError(Exception):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class OTConfig:
    """Sinkhorn knobs; epsilon is the entropy-regularization strength."""

    epsilon: float = DEFAULT_EPSILON
    max_iters: int = DEFAULT_MAX_ITERS
    tol: float = DEFAULT_TOL


@dataclass
class TransportPlan:
    """Coupling between exploration rows and demonstration columns."""

    entries: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    epsilon: float
    n_iters: int = 0
    marginal_error: float = 0.0
    converged: bool = True

    def transport_cost(self, cost: np.ndarray) -> float:
        return float(np.sum(self.entries * cost))


@dataclass
class RewardSeries:
    """Per-exploration-state rewards; non-positive until a finish bonus."""

    values: np.ndarray
    scale: float
    bonus: float = field(default=0.0)


def _check_distribution(p, n, name):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] != n:
        raise OTError(f"{name} must be a length-{n} vector, got shape {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise OTError(f"{name} must be nonnegative and finite")
    if abs(p.sum() - 1.0) > 1e-8:
        raise OTError(f"{name} must sum to 1, got {p.sum():.12f}")
    return p


def cosine_cost_matrix(expl: np.ndarray, demo: np.ndarray) -> np.ndarray:
    """Pairwise cost c[i, j] = 1 - cos(expl[i], demo[j]), clipped to [0, 2].

    Zero-norm vectors are rejected: the cosine is undefined there and any
    silent fallback would corrupt every downstream reward.
    """
    expl = np.asarray(expl, dtype=np.float64)
    demo = np.asarray(demo, dtype=np.float64)
    if expl.ndim != 2 or demo.ndim != 2:
        raise OTError("feature sequences must be 2-d (N, D) arrays")
    if expl.shape[1] != demo.shape[1]:
        raise OTError(
            f"feature dimension mismatch: {expl.shape[1]} vs {demo.shape[1]}"
        )
    en = np.linalg.norm(expl, axis=1)
    dn = np.linalg.norm(demo, axis=1)
    if np.any(en == 0.0):
        raise OTError(f"zero-norm exploration feature at index {int(np.argmin(en))}")
    if np.any(dn == 0.0):
        raise OTError(f"zero-norm demonstration feature at index {int(np.argmin(dn))}")
    sim = (expl @ demo.T) / np.outer(en, dn)
    return np.clip(1.0 - sim, 0.0, 2.0)


def _plan_from_potentials(f, g, cost, eps):
    return np.exp((f[:, None] + g[None, :] - cost) / eps)


def _marginal_error(plan, mu, nu):
    row = np.abs(plan.sum(axis=1) - mu).max()
    col = np.abs(plan.sum(axis=0) - nu).max()
    return float(max(row, col))


def sinkhorn(
    cost: np.ndarray,
    mu: np.ndarray,
    nu: np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> TransportPlan:
    """Entropy-regularized coupling with marginals mu (rows) and nu (columns).

    Runs in the log domain: dual potentials f, g are updated through
    log-sum-exp, which keeps small epsilon stable where the kernel
    exp(-cost/epsilon) would underflow. An annealing pass (epsilon halved
    from 1.0 down to the target, warm-starting the potentials) cuts the
    iteration count at small epsilon by orders of magnitude.

    Iteration stops once the worst row/column marginal violation drops
    below ``tol`` or after ``max_iters`` sweeps at the target epsilon; in
    the latter case the plan is still returned, flagged unconverged, with
    the achieved violation recorded.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise OTError("cost must be a 2-d matrix")
    ne, nd = cost.shape
    mu = _check_distribution(mu, ne, "mu")
    nu = _check_distribution(nu, nd, "nu")
    if not (epsilon > 0):
        raise OTError("epsilon must be positive")

    with np.errstate(divide="ignore"):
        log_mu = np.log(mu)
        log_nu = np.log(nu)

    f = np.zeros(ne)
    g = np.zeros(nd)

    def sweep(eps):
        nonlocal f, g
        m = (f[:, None] + g[None, :] - cost) / eps
        mmax = m.max(axis=1)
        f = f + eps * log_mu - eps * (
            np.log(np.exp(m - mmax[:, None]).sum(axis=1)) + mmax
        )
        m = (f[:, None] + g[None, :] - cost) / eps
        mmax = m.max(axis=0)
        g = g + eps * log_nu - eps * (
            np.log(np.exp(m - mmax[None, :]).sum(axis=0)) + mmax
        )

    # Annealing warm start: halve epsilon from 1.0 toward the target.
    anneal = []
    e = 1.0
    while e > epsilon * 1.0001:
        anneal.append(e)
        e *= 0.5
    for e in anneal:
        for _ in range(20):
            sweep(e)
            plan = _plan_from_potentials(f, g, cost, e)
            if _marginal_error(plan, mu, nu) < tol:
                break

    n_iters = 0
    err = np.inf
    for n_iters in range(1, max_iters + 1):
        sweep(epsilon)
        plan = _plan_from_potentials(f, g, cost, epsilon)
        err = _marginal_error(plan, mu, nu)
        if err < tol:
            break
    converged = err < tol
    if not converged:
        warnings.warn(
            f"sinkhorn did not converge in {max_iters} iterations "
            f"(marginal violation {err:.3e} > tol {tol:.1e})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return TransportPlan(
        entries=plan,
        mu=mu,
        nu=nu,
        epsilon=float(epsilon),
        n_iters=n_iters,
        marginal_error=err,
        converged=converged,
    )


def exact_ot_oracle(cost: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> TransportPlan:
    """Exact unregularized optimal plan on a small instance, via LP.

    Independent of the Sinkhorn path; used to cross-check it in tests.
    """
    cost = np.asarray(cost, dtype=np.float64)
    ne, nd = cost.shape
    if ne * nd > ORACLE_MAX_CELLS:
        raise OTError(f"instance too large for oracle: {ne}x{nd} > {ORACLE_MAX_CELLS} cells")
    mu = _check_distribution(mu, ne, "mu")
    nu = _check_distribution(nu, nd, "nu")

    a_eq = np.zeros((ne + nd, ne * nd))
    for i in range(ne):
        a_eq[i, i * nd : (i + 1) * nd] = 1.0
    for j in range(nd):
        a_eq[ne + j, j::nd] = 1.0
    b_eq = np.concatenate([mu, nu])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise OTError(f"LP solver failed: {res.message}")
    entries = res.x.reshape(ne, nd)
    return TransportPlan(
        entries=entries,
        mu=mu,
        nu=nu,
        epsilon=0.0,
        n_iters=int(res.nit) if res.nit is not None else 0,
        marginal_error=_marginal_error(entries, mu, nu),
        converged=True,
    )


def per_state_rewards(plan: TransportPlan, cost: np.ndarray, scale: float) -> RewardSeries:
    """reward[i] = -scale * sum_j plan[i, j] * cost[i, j]."""
    cost = np.asarray(cost, dtype=np.float64)
    if plan.entries.shape != cost.shape:
        raise OTError(
            f"plan shape {plan.entries.shape} does not match cost shape {cost.shape}"
        )
    if not (scale > 0):
        raise OTError("scale must be positive")
    values = -scale * np.sum(plan.entries * cost, axis=1)
    return RewardSeries(values=values, scale=float(scale))
