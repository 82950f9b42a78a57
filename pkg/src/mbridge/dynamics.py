"""Simulation of the martingale that transports one marginal to another
through a Brownian pinning construction.

A fiber is a start point x together with its terminal conditional law m_x
(discrete atoms or N(x, Delta)). Conditionally on the terminal draw Y ~ m_x,
the drifted process X is a Brownian bridge from (0, x) to (1, Y), which is
exact at the grid times. The martingale is the conditional mean

    M_t = E[Y | X_t] = X_t + (1 - t) u_t(X_t),

where u is the drift of X in its own filtration. For a discrete fiber the
backward posterior is, by Bayes against the bridge likelihood,

    q_j(t, z)  propto  m_x(y_j) exp( [ <z - x, y_j - x>
                                       - t |y_j - x|^2 / 2 ] / (s^2 (1 - t)) ),

with reference volatility s, and u = (mean(q) - z)/(1 - t),
sigma_t = Cov(q)/(1 - t). For a Gaussian fiber both coefficients are linear
and closed-form. Path energies accumulate the drift cost |u|^2/2 and the
weighted volatility cost |sigma - I|^2 / (2 (1 - t)) along the path; for a
Gaussian fiber the volatility cost is deterministic and is accumulated by
exact per-step integration of its spectral antiderivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError, TerminalAmbiguity
from .measures import DiscreteMeasure, barycenter_and_moments

TIME_CLIP = 1.0 - 1e-6
TERMINAL_ATOL = 1e-9
_CHUNK = 32768


@dataclass(frozen=True)
class FiberModel:
    """Start point plus terminal conditional law, with reference volatility."""

    x: np.ndarray
    measure: DiscreteMeasure = None     # discrete terminal law, or
    delta: np.ndarray = None            # Gaussian increment covariance
    sigma_ref: float = 1.0

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        object.__setattr__(self, "x", x)
        if self.sigma_ref <= 0.0:
            raise StructuralError("reference volatility must be positive")
        if (self.measure is None) == (self.delta is None):
            raise StructuralError("provide exactly one of measure or delta")
        if self.measure is not None:
            if self.measure.dim != x.shape[0]:
                raise StructuralError("fiber start and terminal law dimensions differ")
            mean, _, _ = barycenter_and_moments(self.measure)
            if np.max(np.abs(mean - x)) > 1e-10:
                raise StructuralError(
                    "terminal law barycenter must equal the start point")
        else:
            delta = np.asarray(self.delta, dtype=float)
            if delta.ndim == 0:
                delta = delta.reshape(1, 1)
            if delta.shape != (x.shape[0], x.shape[0]):
                raise StructuralError("delta must be d x d")
            if np.max(np.abs(delta - delta.T)) > 1e-12 * max(1.0, np.abs(delta).max()):
                raise StructuralError("delta must be symmetric")
            delta = 0.5 * (delta + delta.T)
            if np.linalg.eigvalsh(delta)[0] <= 0.0:
                raise StructuralError("delta must be positive definite")
            object.__setattr__(self, "delta", delta)

    @property
    def kind(self):
        return "discrete" if self.measure is not None else "gaussian"

    @property
    def dim(self):
        return self.x.shape[0]

    @staticmethod
    def discrete(x, measure, sigma_ref=1.0):
        return FiberModel(x=x, measure=measure, sigma_ref=sigma_ref)

    @staticmethod
    def gaussian(x, delta, sigma_ref=1.0):
        return FiberModel(x=x, delta=delta, sigma_ref=sigma_ref)


def _posterior_logits(fiber, t, z):
    """Unnormalized log weights of the terminal posterior, rows = paths."""
    atoms = fiber.measure.atoms                     # (k, d)
    rel = atoms - fiber.x                           # (k, d)
    sq = np.sum(rel ** 2, axis=1)                   # (k,)
    z = np.atleast_2d(z)
    scale = fiber.sigma_ref ** 2 * (1.0 - t)
    return (np.log(fiber.measure.weights)[None, :]
            + ((z - fiber.x) @ rel.T - 0.5 * t * sq[None, :]) / scale)


def _posterior_weights(fiber, t, z):
    logits = _posterior_logits(fiber, t, z)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def backward_posterior(fiber, t, z):
    """Conditional law of the terminal value given position z at time t.

    Returns the posterior weights over the atoms of the discrete fiber. At
    t = 1 the posterior is a point mass when z matches an atom within 1e-9
    and TerminalAmbiguity is raised otherwise.
    """
    if fiber.kind != "discrete":
        raise StructuralError("backward_posterior needs a discrete fiber")
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise StructuralError("t must lie in [0, 1]")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if t >= 1.0:
        dist = np.linalg.norm(fiber.measure.atoms - z[None, :], axis=1)
        j = int(np.argmin(dist))
        if dist[j] > TERMINAL_ATOL:
            raise TerminalAmbiguity(
                f"terminal position is {dist[j]:.3e} away from every atom")
        w = np.zeros(fiber.measure.n)
        w[j] = 1.0
        return w
    return _posterior_weights(fiber, t, z[None, :])[0]


def _gaussian_drift_matrix(fiber, t):
    """A_t with u(t, z) = A_t (z - x), for reference volatility one."""
    d = fiber.dim
    eye = np.eye(d)
    return (fiber.delta - eye) @ np.linalg.inv((1.0 - t) * eye + t * fiber.delta)


def fiber_coefficients(fiber, t, z):
    """Drift u(t, z) and volatility sigma(t, z) of the pinned construction.

    Discrete fibers use posterior moments, u = (mean - z)/(1-t) and
    sigma = Cov/(1-t); Gaussian fibers use the closed forms
    u = (Delta - I)((1-t) I + t Delta)^{-1} (z - x) and
    sigma = Delta ((1-t) I + t Delta)^{-1}. Reference volatility must be one.
    """
    if fiber.sigma_ref != 1.0:
        raise StructuralError("coefficients are defined at reference volatility one")
    t = float(t)
    if not 0.0 <= t < 1.0:
        raise StructuralError("coefficients need t in [0, 1)")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    d = fiber.dim
    if fiber.kind == "gaussian":
        u = _gaussian_drift_matrix(fiber, t) @ (z - fiber.x)
        eye = np.eye(d)
        sigma = fiber.delta @ np.linalg.inv((1.0 - t) * eye + t * fiber.delta)
        return u, sigma
    q = _posterior_weights(fiber, t, z[None, :])[0]
    atoms = fiber.measure.atoms
    mean = q @ atoms
    second = (atoms * q[:, None]).T @ atoms
    cov = second - np.outer(mean, mean)
    return (mean - z) / (1.0 - t), cov / (1.0 - t)


@dataclass
class PathEnsemble:
    """Simulated paths of (X, M) on a time grid, with path energies.

    Trajectories are stored at ``grid[stored_idx]``; energies accumulate over
    the full grid. ``fiber_index`` labels the fiber each path started from.
    """

    grid: np.ndarray
    stored_idx: np.ndarray
    fibers: list
    fiber_index: np.ndarray
    terminal: np.ndarray
    M: np.ndarray
    X: np.ndarray
    drift_energy: np.ndarray
    vol_energy: np.ndarray
    seed: int
    method: str
    sigma_ref: float
    mu_weights: np.ndarray = field(default=None)

    @property
    def stored_times(self):
        return self.grid[self.stored_idx]

    @property
    def n_paths(self):
        return self.terminal.shape[0]

    def aggregate_energies(self):
        """(drift, volatility) cost of the ensemble.

        Plain path means for a single fiber; for a mixed ensemble the
        fiber means are combined with the declared marginal weights, which
        keeps the aggregation exact under stratified path counts.
        """
        if self.mu_weights is None:
            return (float(np.mean(self.drift_energy)),
                    float(np.mean(self.vol_energy)))
        drift = vol = 0.0
        for i, w in enumerate(self.mu_weights):
            sel = self.fiber_index == i
            drift += w * np.mean(self.drift_energy[sel])
            vol += w * np.mean(self.vol_energy[sel])
        return float(drift), float(vol)

    def to_csv(self, path, max_paths=None):
        """Long-format export: path_id, t, M..., X..., fiber."""
        d = self.terminal.shape[1]
        times = self.stored_times
        count = self.n_paths if max_paths is None else min(self.n_paths,
                                                           int(max_paths))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            m_cols = ",".join(f"M_{k}" for k in range(d)) if d > 1 else "M"
            x_cols = ",".join(f"X_{k}" for k in range(d)) if d > 1 else "X"
            fh.write(f"path_id,t,{m_cols},{x_cols},fiber\n")
            for p in range(count):
                fib = int(self.fiber_index[p])
                for k, t in enumerate(times):
                    mv = ",".join(repr(float(v)) for v in self.M[p, k])
                    xv = ",".join(repr(float(v)) for v in self.X[p, k])
                    fh.write(f"{p},{repr(float(t))},{mv},{xv},{fib}\n")


def _gaussian_vol_energy_increments(delta, grid):
    """Exact per-step integrals of |sigma_t - I|_HS^2 / (2 (1-t)).

    Per eigenvalue lam the antiderivative of (lam-1)^2 (1-t)/((1-t)+t lam)^2
    is -lam/c - log c with c(t) = 1 + t (lam - 1).
    """
    lam = np.linalg.eigvalsh(delta)
    incs = np.zeros(len(grid) - 1)
    for ev in lam:
        c = 1.0 + grid * (ev - 1.0)
        anti = -ev / c - np.log(c)
        incs += np.diff(anti)
    return 0.5 * incs


def simulate_follmer_martingale(fiber, grid=None, n_paths=10_000, seed=42,
                                method="bridge", store_every=1,
                                _bit_generator=None):
    """Simulate (X, M) for one fiber.

    ``method="bridge"`` draws the terminal value and fills in the exact
    Brownian bridge, so the terminal law is exact; ``method="euler"`` runs an
    Euler scheme on dX = u dt + s dB instead and serves as an in-law
    cross-check. Trajectories are stored every ``store_every`` grid points
    (the first and last point always); energies accumulate at every step with
    the left endpoint rule, skipping steps beyond t = 1 - 1e-6, except that a
    Gaussian fiber's volatility energy is integrated exactly per step.
    """
    if grid is None:
        grid = np.linspace(0.0, 1.0, 1001)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or grid[0] != 0.0 or grid[-1] > 1.0:
        raise StructuralError("grid must start at 0, end at most at 1")
    if np.any(np.diff(grid) <= 0.0):
        raise StructuralError("grid must be strictly increasing")
    if method not in ("bridge", "euler"):
        raise StructuralError("method must be 'bridge' or 'euler'")

    k_grid = grid.size
    stored_idx = np.arange(0, k_grid, max(int(store_every), 1))
    if stored_idx[-1] != k_grid - 1:
        stored_idx = np.append(stored_idx, k_grid - 1)
    stored_pos = {int(g): k for k, g in enumerate(stored_idx)}

    d = fiber.dim
    sig = fiber.sigma_ref
    n_paths = int(n_paths)
    rng = np.random.Generator(_bit_generator
                              if _bit_generator is not None
                              else np.random.Philox(key=seed))

    if method == "euler" and sig != 1.0:
        raise StructuralError("euler cross-check runs at reference volatility one")

    gaussian = fiber.kind == "gaussian"
    if gaussian:
        chol = np.linalg.cholesky(fiber.delta)
        vol_incs = _gaussian_vol_energy_increments(fiber.delta, grid) \
            if sig == 1.0 else None
        drift_mats = [_gaussian_drift_matrix(fiber, min(t, TIME_CLIP))
                      for t in grid] if sig == 1.0 else None
        prec_inv = np.linalg.inv(fiber.delta)
    else:
        atoms = fiber.measure.atoms
        cum = np.cumsum(fiber.measure.weights)

    M = np.empty((n_paths, stored_idx.size, d))
    X = np.empty((n_paths, stored_idx.size, d))
    terminal = np.empty((n_paths, d))
    drift_energy = np.zeros(n_paths)
    vol_energy = np.zeros(n_paths)
    if sig != 1.0:
        drift_energy[:] = np.nan
        vol_energy[:] = np.nan

    eye = np.eye(d)
    for lo in range(0, n_paths, _CHUNK):
        hi = min(lo + _CHUNK, n_paths)
        nc = hi - lo
        if gaussian:
            y = fiber.x + rng.standard_normal((nc, d)) @ chol.T
        else:
            y = atoms[np.searchsorted(cum, rng.random(nc), side="right").clip(max=len(cum) - 1)]
        terminal[lo:hi] = y
        x_cur = np.broadcast_to(fiber.x, (nc, d)).copy()

        for k, t in enumerate(grid):
            last = k == k_grid - 1
            # martingale value and coefficients at the current point
            t_eff = min(t, TIME_CLIP)
            if method == "bridge" and t >= 1.0:
                # terminal pinning: the bridge hits the drawn terminal by
                # construction, so snap away the last-step rounding
                x_cur = y.copy()
                m_cur = y
                u_cur = None
            elif gaussian:
                if sig == 1.0:
                    u_cur = (x_cur - fiber.x) @ drift_mats[k].T
                    m_cur = x_cur + (1.0 - t_eff) * u_cur
                else:
                    prec = (t_eff / (sig ** 2 * (1.0 - t_eff))) * eye + prec_inv
                    cov_q = np.linalg.inv(prec)
                    m_cur = fiber.x + ((x_cur - fiber.x)
                                       / (sig ** 2 * (1.0 - t_eff))) @ cov_q.T
                    u_cur = None
            else:
                q = _posterior_weights(fiber, t_eff, x_cur)
                m_cur = q @ atoms
                u_cur = (m_cur - x_cur) / (1.0 - t_eff)

            if k in stored_pos:
                pos = stored_pos[k]
                M[lo:hi, pos] = m_cur
                X[lo:hi, pos] = x_cur

            if last:
                break
            dt = grid[k + 1] - grid[k]

            # energies, left endpoint, clipped near the terminal time
            if sig == 1.0 and t <= TIME_CLIP:
                drift_energy[lo:hi] += 0.5 * dt * np.sum(u_cur ** 2, axis=1)
                if not gaussian:
                    second = np.einsum("pk,ki,kj->pij", q, atoms, atoms)
                    cov = second - np.einsum("pi,pj->pij", m_cur, m_cur)
                    sig_mat = cov / (1.0 - t)
                    vol_energy[lo:hi] += (dt / (2.0 * (1.0 - t))
                                          * np.sum((sig_mat - eye) ** 2,
                                                   axis=(1, 2)))
            if sig == 1.0 and gaussian:
                vol_energy[lo:hi] += vol_incs[k]

            noise = rng.standard_normal((nc, d))
            if method == "bridge":
                rem = 1.0 - t
                x_cur = (x_cur + (y - x_cur) * (dt / rem)
                         + sig * math.sqrt(dt * (1.0 - grid[k + 1]) / rem) * noise)
            else:
                x_cur = x_cur + u_cur * dt + sig * math.sqrt(dt) * noise

    return PathEnsemble(grid=grid, stored_idx=stored_idx, fibers=[fiber],
                        fiber_index=np.zeros(n_paths, dtype=int),
                        terminal=terminal, M=M, X=X,
                        drift_energy=drift_energy, vol_energy=vol_energy,
                        seed=int(seed), method=method, sigma_ref=sig)


def randomize_over_mu(mu, fibers, grid=None, n_paths=10_000, seed=42,
                      nu=None, method="bridge", store_every=1):
    """Mix single-fiber simulations with stratified path counts.

    Path counts follow mu by largest-remainder rounding, each fiber runs on
    its own counter-based substream (so the mixture is reproducible under
    any execution order), and when ``nu`` is passed the mixture of the
    declared terminal laws is validated against it within 1e-9.
    """
    if len(fibers) != mu.n:
        raise StructuralError("need one fiber per mu atom")
    for i, fib in enumerate(fibers):
        if np.max(np.abs(fib.x - mu.atoms[i])) > 1e-12:
            raise StructuralError(f"fiber {i} does not start at mu atom {i}")
        if fib.kind != "discrete":
            raise StructuralError("mixtures need discrete fibers")
    if nu is not None:
        pooled_atoms = np.concatenate([f.measure.atoms for f in fibers])
        pooled_w = np.concatenate([mu.weights[i] * f.measure.weights
                                   for i, f in enumerate(fibers)])
        mix = DiscreteMeasure(pooled_atoms, pooled_w)
        ka = np.lexsort(mix.atoms.T[::-1])
        kb = np.lexsort(nu.atoms.T[::-1])
        if (mix.n != nu.n
                or np.max(np.linalg.norm(mix.atoms[ka] - nu.atoms[kb],
                                         axis=1)) > 1e-9
                or np.max(np.abs(mix.weights[ka] - nu.weights[kb])) > 1e-9):
            raise StructuralError("fiber mixture does not match the declared nu")

    base = np.floor(mu.weights * n_paths).astype(int)
    short = n_paths - base.sum()
    if short > 0:
        frac = mu.weights * n_paths - base
        base[np.argsort(-frac, kind="stable")[:short]] += 1
    if np.any(base == 0):
        raise StructuralError("n_paths too small to give every fiber a stratum")

    parts = []
    key = np.random.Philox(key=seed)
    for i, fib in enumerate(fibers):
        parts.append((i, simulate_follmer_martingale(
            fib, grid=grid, n_paths=int(base[i]), seed=seed, method=method,
            store_every=store_every, _bit_generator=key.jumped(i + 1))))

    first = parts[0][1]
    return PathEnsemble(
        grid=first.grid, stored_idx=first.stored_idx,
        fibers=[f for f in fibers],
        fiber_index=np.concatenate([np.full(p.n_paths, i, dtype=int)
                                    for i, p in parts]),
        terminal=np.concatenate([p.terminal for _, p in parts]),
        M=np.concatenate([p.M for _, p in parts]),
        X=np.concatenate([p.X for _, p in parts]),
        drift_energy=np.concatenate([p.drift_energy for _, p in parts]),
        vol_energy=np.concatenate([p.vol_energy for _, p in parts]),
        seed=int(seed), method=method, sigma_ref=first.sigma_ref,
        mu_weights=mu.weights.copy())


@dataclass(frozen=True)
class BijectionReport:
    cost_drift: float
    cost_mart: float
    rel_discrepancy: float
    pathwise_max_dev: float


def phi_bijection_check(ensemble):
    """Drift-cost versus volatility-cost comparison on one ensemble.

    The pinned construction and its drift representation carry the same
    cost, so the ensemble's mean drift energy and mean weighted volatility
    energy must agree up to Monte Carlo and discretization error. Also
    recomputes u at the stored points and reports the maximal deviation of
    M - X - (1 - t) u, which vanishes by construction.
    """
    cost_drift, cost_mart = ensemble.aggregate_energies()
    dev = 0.0
    for pos, g in enumerate(ensemble.stored_idx):
        t = float(ensemble.grid[g])
        if t > TIME_CLIP:
            continue
        for i, fib in enumerate(ensemble.fibers):
            sel = ensemble.fiber_index == i if len(ensemble.fibers) > 1 \
                else slice(None)
            xs = ensemble.X[sel, pos]
            if fib.kind == "gaussian":
                u = (xs - fib.x) @ _gaussian_drift_matrix(fib, t).T
            else:
                q = _posterior_weights(fib, t, xs)
                u = (q @ fib.measure.atoms - xs) / (1.0 - t)
            resid = ensemble.M[sel, pos] - xs - (1.0 - t) * u
            dev = max(dev, float(np.max(np.abs(resid))))
    rel = abs(cost_drift - cost_mart) / max(1.0, abs(cost_mart))
    return BijectionReport(cost_drift=cost_drift, cost_mart=cost_mart,
                           rel_discrepancy=rel, pathwise_max_dev=dev)
