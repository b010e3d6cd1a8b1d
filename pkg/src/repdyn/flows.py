"""Continuous-time learning flows: closed forms and RK4 integration.

Value flows (one-step, n-step, lambda-return bootstrapping and Monte Carlo)
have exact matrix-exponential solutions and are evaluated in closed form.
The joint representation/weight flow and its multi-head variants are smooth
bilinear ODEs integrated with a fixed-step classical Runge-Kutta scheme;
determinism is preferred over adaptivity here. With frozen heads (beta = 0)
the multi-head right-hand side collapses to a K x K coupling, which the
integrator exploits so that head counts in the tens of thousands cost the
same as a single head.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DivergenceError, NumericalError
from .mdp import MarkovChain, exact_value

DEFAULT_STEP = 1e-3
_DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped states of a flow; states are (n, K) matrices, K=1 for value flows."""

    times: np.ndarray
    states: list
    meta: dict

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or len(times) != len(self.states):
            raise ConfigurationError("times and states must have matching lengths")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ConfigurationError("times must be strictly increasing")
        shapes = {s.shape for s in self.states}
        if len(shapes) > 1:
            raise ConfigurationError(f"state shapes differ: {shapes}")
        object.__setattr__(self, "times", times)

    def final(self) -> np.ndarray:
        return self.states[-1]

    def values(self) -> np.ndarray:
        """(T, n) array for value flows (K = 1)."""
        return np.stack([s[:, 0] for s in self.states])


@dataclass(frozen=True)
class EnsembleState:
    """Shared representation, per-head weights, optional per-head reward columns."""

    phi: np.ndarray
    weights: np.ndarray  # (M, K), one weight vector per head
    cumulants: np.ndarray | None = None  # (n, M), one reward vector per column

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if weights.shape[1] != phi.shape[1]:
            raise ConfigurationError(
                f"weights are {weights.shape[1]}-dimensional but phi has {phi.shape[1]} columns"
            )
        if self.cumulants is not None:
            cumulants = np.asarray(self.cumulants, dtype=float)
            if cumulants.shape != (phi.shape[0], weights.shape[0]):
                raise ConfigurationError(
                    f"cumulants must be (n, M) = ({phi.shape[0]}, {weights.shape[0]}), "
                    f"got {cumulants.shape}"
                )
            object.__setattr__(self, "cumulants", cumulants)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "weights", weights)

    @property
    def n_heads(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class LinearFlowSpec:
    """d/dt Phi = A Phi + B with initial condition phi0; fixed point -A^{-1} B."""

    A: np.ndarray
    B: np.ndarray
    phi0: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        phi0 = np.atleast_2d(np.asarray(self.phi0, dtype=float))
        if phi0.ndim == 2 and phi0.shape[0] == 1 and A.shape[0] != 1:
            phi0 = phi0.T
        if B.shape[0] == 1 and A.shape[0] != 1:
            B = B.T
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigurationError("A must be square")
        if B.shape != phi0.shape or B.shape[0] != A.shape[0]:
            raise ConfigurationError("A, B and phi0 shapes are incompatible")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "phi0", phi0)

    def stable(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.A).real < 0))


def matrix_exponential(A: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(t A) by scaling-and-squaring; raises on non-finite input or overflow."""
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise NumericalError("matrix exponential of non-finite input")
    out = scipy.linalg.expm(t * A)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"matrix exponential overflowed for ||tA|| = {np.linalg.norm(t * A):.3e}")
    return out


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ConfigurationError("times must be a non-empty 1-d sequence")
    if times[0] < 0 or (len(times) > 1 and np.any(np.diff(times) <= 0)):
        raise ConfigurationError("times must be nonnegative and strictly increasing")
    return times


def _exponential_value_flow(op: np.ndarray, chain: MarkovChain, v0, times, meta: dict) -> Trajectory:
    """Shared closed form V_t = exp(t*op)(V_0 - V^pi) + V^pi."""
    times = _check_times(times)
    v0 = np.asarray(v0, dtype=float).reshape(-1)
    if v0.shape[0] != chain.n_states:
        raise ConfigurationError("v0 length must match the chain")
    v_star = exact_value(chain)
    delta0 = v0 - v_star
    states = []
    for t in times:
        if t == 0.0:
            states.append(v0[:, None].copy())
            continue
        drift = matrix_exponential(op, t) @ delta0
        states.append((v_star + drift)[:, None])
    return Trajectory(times=times, states=states, meta=meta)


def td_value_flow(chain: MarkovChain, v0, times) -> Trajectory:
    """One-step bootstrapped value flow: V_t = exp(-t(I - gamma P))(V_0 - V^pi) + V^pi."""
    n = chain.n_states
    op = -(np.eye(n) - chain.gamma * chain.transition)
    return _exponential_value_flow(op, chain, v0, times, {"flow": "td", "gamma": chain.gamma})


def mc_value_flow(chain: MarkovChain, v0, times) -> Trajectory:
    """Monte Carlo flow: plain exponential interpolation from V_0 to V^pi.

    The displacement V_t - V^pi stays parallel to V_0 - V^pi for all t; no
    transition structure enters the trajectory.
    """
    times = _check_times(times)
    v0 = np.asarray(v0, dtype=float).reshape(-1)
    v_star = exact_value(chain)
    delta0 = v0 - v_star
    states = [v0[:, None].copy() if t == 0.0 else (v_star + np.exp(-t) * delta0)[:, None]
              for t in times]
    return Trajectory(times=times, states=states, meta={"flow": "mc", "gamma": chain.gamma})


def nstep_value_flow(chain: MarkovChain, n: int, v0, times) -> Trajectory:
    """n-step bootstrapped flow: V_t = exp(-t(I - (gamma P)^n))(V_0 - V^pi) + V^pi."""
    if n < 1:
        raise ConfigurationError(f"n must be at least 1, got {n}")
    dim = chain.n_states
    op = -(np.eye(dim) - np.linalg.matrix_power(chain.gamma * chain.transition, n))
    return _exponential_value_flow(
        op, chain, v0, times, {"flow": "nstep", "n": n, "gamma": chain.gamma}
    )


def td_lambda_series_operator(chain: MarkovChain, lam: float) -> np.ndarray:
    """(1-lambda) sum_{k>=1} lambda^{k-1} gamma^k P^k, summed exactly via a resolvent."""
    if not 0.0 <= lam < 1.0:
        raise ConfigurationError(f"lambda must lie in [0, 1), got {lam}")
    n = chain.n_states
    gp = chain.gamma * chain.transition
    return (1.0 - lam) * gp @ np.linalg.solve(np.eye(n) - lam * gp, np.eye(n))


def td_lambda_value_flow(chain: MarkovChain, lam: float, v0, times) -> Trajectory:
    """Lambda-return flow: V_t = exp(t(S_lambda - I))(V_0 - V^pi) + V^pi."""
    op = td_lambda_series_operator(chain, lam) - np.eye(chain.n_states)
    return _exponential_value_flow(
        op, chain, v0, times, {"flow": "td_lambda", "lambda": lam, "gamma": chain.gamma}
    )


def _rk4_integrate(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    times: np.ndarray,
    step: float,
) -> list:
    """Classical RK4 with fixed step; sample times are hit exactly.

    The state norm is monitored; exceeding 1e12 raises DivergenceError with
    the time of blowup.
    """
    if step <= 0:
        raise ConfigurationError(f"step must be positive, got {step}")
    y = y0.copy()
    t = 0.0
    out = []
    for target in times:
        while t < target - 1e-12:
            h = min(step, target - t)
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
            norm = np.linalg.norm(y)
            if not np.isfinite(norm) or norm > _DIVERGENCE_NORM:
                raise DivergenceError(f"flow diverged at t = {t:.6g}", time=t)
        out.append(y.copy())
    return out


def joint_flow(
    chain: MarkovChain,
    phi0: np.ndarray,
    w0: np.ndarray,
    alpha: float,
    beta: float,
    times,
    step: float = DEFAULT_STEP,
) -> Trajectory:
    """Semi-gradient joint flow on (Phi, w) for a single linear value head.

    d/dt Phi = alpha (R + gamma P Phi w - Phi w) w^T
    d/dt w   = beta  Phi^T (R + gamma P Phi w - Phi w)

    The bootstrap target is treated as a constant (no gradient flows through
    it); that convention is already baked into these right-hand sides.
    Trajectory states stack Phi over w: shape (n + 1, K) with the last row w^T.
    """
    times = _check_times(times)
    if alpha < 0 or beta < 0:
        raise ConfigurationError("alpha and beta must be nonnegative")
    phi0 = np.asarray(phi0, dtype=float)
    w0 = np.asarray(w0, dtype=float).reshape(-1)
    n, k = phi0.shape
    if n != chain.n_states or w0.shape[0] != k:
        raise ConfigurationError("phi0/w0 shapes do not match the chain")
    P, R = chain.transition, chain.reward
    gamma = chain.gamma

    def rhs(state):
        phi, w = state[:n], state[n]
        delta = R + gamma * (P @ (phi @ w)) - phi @ w
        dphi = alpha * np.outer(delta, w)
        dw = beta * (phi.T @ delta)
        return np.vstack([dphi, dw[None, :]])

    y0 = np.vstack([phi0, w0[None, :]])
    states = _rk4_integrate(rhs, y0, times, step)
    meta = {"flow": "joint", "alpha": alpha, "beta": beta, "gamma": gamma, "step": step}
    return Trajectory(times=times, states=states, meta=meta)


def ensemble_flow(
    chain: MarkovChain,
    state0: EnsembleState,
    alpha: float,
    beta: float,
    times,
    step: float = DEFAULT_STEP,
) -> Trajectory:
    """Multi-head semi-gradient flow on a shared representation.

    d/dt Phi = alpha sum_m (r^m + gamma P Phi w^m - Phi w^m) (w^m)^T
    d/dt w^m = beta  Phi^T (r^m + gamma P Phi w^m - Phi w^m)

    Every head predicts from the same Phi; r^m is the chain's expected reward
    unless per-head cumulants are attached to ``state0``. With beta = 0 the
    weights are frozen and the Phi equation reduces to
    (gamma P - I) Phi W + F with W = sum_m w^m (w^m)^T and F = sum_m r^m (w^m)^T,
    which is what gets integrated (identical dynamics, head-count-free cost).
    Trajectory states are the Phi matrices.
    """
    times = _check_times(times)
    if alpha < 0 or beta < 0:
        raise ConfigurationError("alpha and beta must be nonnegative")
    phi0 = state0.phi
    n, k = phi0.shape
    if n != chain.n_states:
        raise ConfigurationError("phi0 does not match the chain")
    P, gamma = chain.transition, chain.gamma
    rewards = state0.cumulants if state0.cumulants is not None else None
    meta = {
        "flow": "ensemble",
        "alpha": alpha,
        "beta": beta,
        "gamma": gamma,
        "M": state0.n_heads,
        "step": step,
        "cumulants": rewards is not None,
    }

    if beta == 0.0:
        W = state0.weights.T @ state0.weights
        if rewards is not None:
            forcing = rewards @ state0.weights
        else:
            forcing = np.outer(chain.reward, state0.weights.sum(axis=0))

        def rhs(phi):
            return alpha * ((gamma * (P @ phi) - phi) @ W + forcing)

        states = _rk4_integrate(rhs, phi0, times, step)
        return Trajectory(times=times, states=states, meta=meta)

    # Trained heads: carry the (K, M) weight matrix alongside Phi, padded to
    # n rows so the integrator sees one rectangular state (n >= K here).
    if n < k:
        raise ConfigurationError("trained-head integration expects n >= K")
    m = state0.n_heads
    wmat0 = state0.weights.T
    rmat = rewards if rewards is not None else np.broadcast_to(chain.reward[:, None], (n, m)).copy()
    pad = np.zeros((n - k, m))

    def pack(phi, wmat):
        return np.hstack([phi, np.vstack([wmat, pad])])

    def rhs(state):
        phi, wmat = state[:, :k], state[:k, k:]
        pred = phi @ wmat
        delta = rmat + gamma * (P @ pred) - pred
        return pack(alpha * (delta @ wmat.T), beta * (phi.T @ delta))

    states_packed = _rk4_integrate(rhs, pack(phi0, wmat0), times, step)
    states = [s[:, :k].copy() for s in states_packed]
    return Trajectory(times=times, states=states, meta=meta)


def sample_weights(M: int, K: int, variance: float, seed) -> np.ndarray:
    """M independent N(0, variance I_K) head weights, deterministic per seed; rows are heads."""
    if variance <= 0:
        raise ConfigurationError(f"variance must be positive, got {variance}")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(variance), size=(M, K))


def sample_block_orthogonal_weights(M: int, K: int, n_blocks: int, variance: float, seed) -> np.ndarray:
    """Head weights supported on disjoint coordinate blocks, task i on block i.

    Heads are assigned to blocks contiguously (head m to block ceil(m*L/M));
    K must divide into n_blocks equal parts.
    """
    if K % n_blocks != 0 or M % n_blocks != 0:
        raise ConfigurationError("n_blocks must divide both K and M")
    rng = np.random.default_rng(seed)
    block = K // n_blocks
    w = np.zeros((M, K))
    per = M // n_blocks
    for i in range(n_blocks):
        rows = slice(i * per, (i + 1) * per)
        cols = slice(i * block, (i + 1) * block)
        w[rows, cols] = rng.normal(0.0, np.sqrt(variance), size=(per, block))
    return w


def sample_cumulants(M: int, sigma: np.ndarray, seed) -> np.ndarray:
    """M mean-zero Gaussian reward vectors with covariance ``sigma``; columns are heads."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ConfigurationError("sigma must be a square matrix")
    if np.abs(sigma - sigma.T).max() > 1e-10:
        raise ConfigurationError("sigma must be symmetric")
    w, V = np.linalg.eigh(sigma)
    if w.min() < -1e-10 * max(w.max(), 1.0):
        raise ConfigurationError("sigma must be positive semi-definite")
    root = V @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ V.T
    rng = np.random.default_rng(seed)
    return root @ rng.standard_normal((sigma.shape[0], M))


def linear_limit_flow(spec: LinearFlowSpec, times) -> Trajectory:
    """Closed form of d/dt Phi = A Phi + B: Phi_t = e^{tA} Phi_0 + (I - e^{tA})(-A^{-1}B).

    Instantiates every infinite-head limit: A = -(I - gamma P) with B = 0 or a
    Gaussian forcing matrix, and the averaged operators for multi-policy /
    multi-discount head splits.
    """
    times = _check_times(times)
    import warnings as _warnings

    if not spec.stable():
        _warnings.warn("A has eigenvalues with nonnegative real part; flow will not settle",
                       RuntimeWarning, stacklevel=2)
    try:
        fixed_point = -np.linalg.solve(spec.A, spec.B)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError(f"A is singular: {exc}") from exc
    states = []
    for t in times:
        E = matrix_exponential(spec.A, t)
        states.append(E @ spec.phi0 + (np.eye(spec.A.shape[0]) - E) @ fixed_point)
    meta = {"flow": "linear_limit"}
    return Trajectory(times=times, states=states, meta=meta)


def build_multi_task_operator(chains: list, mode: str) -> np.ndarray:
    """Averaged flow operator for evenly split auxiliary heads.

    mode="policies": -(I - gamma P_bar), P_bar the average transition matrix
    (all chains must share gamma). mode="discounts": -(I - gamma_bar P), all
    chains must share the transition matrix.
    """
    if not chains:
        raise ConfigurationError("need at least one chain")
    n = chains[0].n_states
    if any(c.n_states != n for c in chains):
        raise ConfigurationError("all chains must share the state space")
    if mode == "policies":
        gammas = {c.gamma for c in chains}
        if len(gammas) > 1:
            raise ConfigurationError("mode='policies' requires a shared discount")
        p_bar = np.mean([c.transition for c in chains], axis=0)
        return -(np.eye(n) - chains[0].gamma * p_bar)
    if mode == "discounts":
        base = chains[0].transition
        if any(np.abs(c.transition - base).max() > 1e-12 for c in chains[1:]):
            raise ConfigurationError("mode='discounts' requires a shared transition matrix")
        gamma_bar = float(np.mean([c.gamma for c in chains]))
        return -(np.eye(n) - gamma_bar * base)
    raise ConfigurationError(f"unknown mode {mode!r}; expected 'policies' or 'discounts'")


def split_heads(M: int, L: int) -> np.ndarray:
    """Task index (0-based) per head for an even contiguous split: head m -> ceil(m L / M) - 1."""
    if M % L != 0:
        raise ConfigurationError("L must divide M")
    m = np.arange(1, M + 1)
    return np.ceil(m * L / M).astype(int) - 1


def multi_task_flow(
    chains: list,
    weights: np.ndarray,
    phi0: np.ndarray,
    times,
    mode: str = "policies",
    step: float = DEFAULT_STEP,
) -> Trajectory:
    """Frozen-weight multi-head flow with heads split evenly over L tasks, zero reward.

    d/dt Phi = sum_i (gamma_i P_i - I) Phi W_i with W_i the second-moment
    matrix of task i's heads. Reduces to the single-task frozen flow at L = 1.
    """
    times = _check_times(times)
    L = len(chains)
    M = weights.shape[0]
    assign = split_heads(M, L)
    ops = [c.gamma * c.transition - np.eye(c.n_states) for c in chains]
    Ws = [weights[assign == i].T @ weights[assign == i] for i in range(L)]

    def rhs(phi):
        out = np.zeros_like(phi)
        for op, W in zip(ops, Ws):
            out += (op @ phi) @ W
        return out

    states = _rk4_integrate(rhs, np.asarray(phi0, dtype=float), times, step)
    meta = {"flow": "multi_task", "mode": mode, "L": L, "M": M, "step": step}
    return Trajectory(times=times, states=states, meta=meta)


def trajectory_to_csv(traj: Trajectory, wide: bool | None = None) -> str:
    """Serialize a trajectory to CSV with '# key=value' meta header lines.

    Value flows (K = 1) default to the wide format (t, v_0, ..., v_{n-1});
    matrix flows default to the long format (t, entry_row, entry_col, value).
    """
    buf = io.StringIO()
    for key in sorted(traj.meta):
        buf.write(f"# {key}={traj.meta[key]}\n")
    k = traj.states[0].shape[1]
    if wide is None:
        wide = k == 1
    if wide and k != 1:
        raise ConfigurationError("wide format is only defined for value flows (K = 1)")
    if wide:
        n = traj.states[0].shape[0]
        buf.write("t," + ",".join(f"v_{i}" for i in range(n)) + "\n")
        for t, s in zip(traj.times, traj.states):
            buf.write(repr(float(t)) + "," + ",".join(repr(float(x)) for x in s[:, 0]) + "\n")
    else:
        buf.write("t,entry_row,entry_col,value\n")
        for t, s in zip(traj.times, traj.states):
            for i in range(s.shape[0]):
                for j in range(s.shape[1]):
                    buf.write(f"{repr(float(t))},{i},{j},{repr(float(s[i, j]))}\n")
    return buf.getvalue()
