"""Observation-time view of the pinned martingale.

Observing the terminal draw Y through additive white noise,
dR_s = (Y - x) ds + dW_s, gives the posterior weights

    w_j(s, r)  propto  m_x(y_j) exp( <y_j - x, r> - s |y_j - x|^2 / 2 ),

and the filter mean Z_s = sum_j w_j y_j. Under the time change
tau = s^2_ref * s / (1 + s^2_ref * s) the filter mean has the same law as
the pinned martingale M_tau run at reference volatility s_ref, for every
s_ref; the invariance test below samples the construction at several
volatilities and compares the laws directly. For a symmetric two-atom fiber
with unit gap the posterior probability solves dZ = Z (1 - Z) dB, which the
cross-check integrates with independent driving noise and compares in law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import FiberModel, _posterior_weights
from .errors import StructuralError
from .solver import SolverConfig, inner_dual_solve
from .stats import ks_distance


def simulate_observations(fiber, s_grid, n_paths=1000, seed=42):
    """Sample observation paths R on the grid, exact increments.

    Returns (R, Y) with R of shape (n_paths, len(s_grid), d).
    """
    if fiber.kind != "discrete":
        raise StructuralError("observations are defined for discrete fibers")
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.ndim != 1 or s_grid.size < 1 or s_grid[0] < 0.0:
        raise StructuralError("s_grid must be nonnegative and one dimensional")
    if s_grid.size > 1 and np.any(np.diff(s_grid) <= 0.0):
        raise StructuralError("s_grid must be strictly increasing")
    rng = np.random.Generator(np.random.Philox(key=seed))
    atoms = fiber.measure.atoms
    cum = np.cumsum(fiber.measure.weights)
    d = fiber.dim
    y = atoms[np.searchsorted(cum, rng.random(n_paths),
                              side="right").clip(max=len(cum) - 1)]
    r = np.zeros((n_paths, s_grid.size, d))
    prev_s = 0.0
    prev_r = np.zeros((n_paths, d))
    for k, s in enumerate(s_grid):
        ds = s - prev_s
        if ds > 0.0:
            prev_r = (prev_r + (y - fiber.x) * ds
                      + math.sqrt(ds) * rng.standard_normal((n_paths, d)))
        r[:, k] = prev_r
        prev_s = s
    return r, y


def posterior_estimator(fiber, s, r):
    """Filter weights and mean given the observation value r at time s."""
    if fiber.kind != "discrete":
        raise StructuralError("the filter needs a discrete fiber")
    s = float(s)
    if s < 0.0:
        raise StructuralError("s must be nonnegative")
    rel = fiber.measure.atoms - fiber.x
    sq = np.sum(rel ** 2, axis=1)
    r2 = np.atleast_2d(np.asarray(r, dtype=float))
    logits = (np.log(fiber.measure.weights)[None, :]
              + r2 @ rel.T - 0.5 * s * sq[None, :])
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    z = w @ fiber.measure.atoms
    if np.asarray(r, dtype=float).ndim == 1:
        return w[0], z[0]
    return w, z


def info_time_change(s, sigma_ref=1.0):
    """Bridge time tau carrying the same information as observation time s."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise StructuralError("s must be nonnegative")
    c = sigma_ref ** 2
    with np.errstate(invalid="ignore"):
        tau = np.where(np.isinf(s), 1.0, c * s / (1.0 + c * s))
    return float(tau) if tau.ndim == 0 else tau


def inverse_info_time(tau, sigma_ref=1.0):
    tau = np.asarray(tau, dtype=float)
    if np.any((tau < 0.0) | (tau > 1.0)):
        raise StructuralError("tau must lie in [0, 1]")
    c = sigma_ref ** 2
    with np.errstate(divide="ignore"):
        s = np.where(tau >= 1.0, np.inf, tau / (c * (1.0 - tau)))
    return float(s) if s.ndim == 0 else s


@dataclass(frozen=True)
class SigmaInvarianceReport:
    sigmas: tuple
    s: float
    n_samples: int
    ks_matrix: np.ndarray
    max_ks: float
    samples: dict


def sigma_invariance_test(fiber, s=1.0, sigmas=(0.5, 1.0, 2.0),
                          n_samples=40_000, seed=42):
    """Sample M at the information time for several reference volatilities.

    For each volatility the bridge is sampled exactly at the single time
    tau_sigma(s) and the posterior mean is computed from the same
    construction; the empirical laws are compared pairwise by the
    Kolmogorov-Smirnov distance. One-dimensional fibers only.
    """
    if fiber.dim != 1:
        raise StructuralError("the invariance test compares laws in d = 1")
    if fiber.kind != "discrete":
        raise StructuralError("the invariance test needs a discrete fiber")
    atoms = fiber.measure.atoms
    cum = np.cumsum(fiber.measure.weights)
    samples = {}
    for j, sig in enumerate(sigmas):
        rng = np.random.Generator(np.random.Philox(key=seed).jumped(j + 1))
        tau = info_time_change(s, sig)
        y = atoms[np.searchsorted(cum, rng.random(n_samples),
                                  side="right").clip(max=len(cum) - 1)]
        noise = rng.standard_normal((n_samples, 1))
        x_tau = (fiber.x + tau * (y - fiber.x)
                 + sig * math.sqrt(tau * (1.0 - tau)) * noise)
        fib_sig = FiberModel.discrete(fiber.x, fiber.measure, sigma_ref=sig)
        w = _posterior_weights(fib_sig, tau, x_tau)
        samples[float(sig)] = (w @ atoms).ravel()
    keys = [float(sg) for sg in sigmas]
    ks = np.zeros((len(keys), len(keys)))
    for a in range(len(keys)):
        for b in range(a + 1, len(keys)):
            ks[a, b] = ks[b, a] = ks_distance(samples[keys[a]],
                                              samples[keys[b]])
    return SigmaInvarianceReport(sigmas=tuple(keys), s=float(s),
                                 n_samples=int(n_samples), ks_matrix=ks,
                                 max_ks=float(ks.max()), samples=samples)


@dataclass(frozen=True)
class WonhamReport:
    checkpoints: tuple
    ks_by_checkpoint: dict
    terminal_freq_exact: float
    terminal_freq_euler: float
    clamp_violations: int
    n_paths: int


def wonham_sde_crosscheck(n_paths=20_000, n_steps=4000, s_max=4.0,
                          checkpoints=(1.0, 4.0), seed=42):
    """Exact filter versus Euler on its autonomous SDE, compared in law.

    The symmetric two-atom fiber at gap one has posterior probability
    Z_s = logistic(R_s), and Z solves dZ = Z (1 - Z) dB for an innovation
    Brownian motion B. The cross-check integrates that SDE from Z_0 = 1/2
    with freshly drawn noise, clamps excursions outside [0, 1] (counting
    them), and compares the two laws at the checkpoints, plus the frequency
    of ending in the upper half.
    """
    checkpoints = tuple(float(c) for c in checkpoints)
    if any(c <= 0.0 or c > s_max for c in checkpoints):
        raise StructuralError("checkpoints must lie in (0, s_max]")
    rng = np.random.Generator(np.random.Philox(key=seed))

    # exact side: R_s = s Y' + W_s with Y' = +-1/2, Z = logistic(R)
    yp = np.where(rng.random(n_paths) < 0.5, -0.5, 0.5)
    z_exact = {}
    for c in checkpoints:
        r = c * yp + math.sqrt(c) * rng.standard_normal(n_paths)
        z_exact[c] = 1.0 / (1.0 + np.exp(-r))

    # euler side, independent noise
    ds = s_max / n_steps
    sqrt_ds = math.sqrt(ds)
    z = np.full(n_paths, 0.5)
    z_euler = {}
    violations = 0
    s_cur = 0.0
    remaining = sorted(checkpoints)
    for _ in range(n_steps):
        z = z + z * (1.0 - z) * sqrt_ds * rng.standard_normal(n_paths)
        out = (z < 0.0) | (z > 1.0)
        violations += int(np.count_nonzero(out))
        np.clip(z, 0.0, 1.0, out=z)
        s_cur += ds
        while remaining and s_cur >= remaining[0] - 1e-12:
            z_euler[remaining.pop(0)] = z.copy()

    ks = {c: float(ks_distance(z_exact[c], z_euler[c])) for c in checkpoints}
    last = max(checkpoints)
    return WonhamReport(
        checkpoints=checkpoints, ks_by_checkpoint=ks,
        terminal_freq_exact=float(np.mean(z_exact[last] > 0.5)),
        terminal_freq_euler=float(np.mean(z_euler[last] > 0.5)),
        clamp_violations=violations, n_paths=int(n_paths))


@dataclass(frozen=True)
class RestartReport:
    eta: np.ndarray
    weights: np.ndarray
    barycenter: np.ndarray
    recovered_h: np.ndarray
    recovered_weights: np.ndarray
    max_weight_dev: float


def restart_posterior(nu, psi, h, x, s, r, config=None):
    """Filter posterior as a fresh tilted fiber, with a dual cross-check.

    A fiber conditional with potentials (psi, h) observed up to time s at
    value r is again a Gibbs conditional for the tilted potential
    psi'_j = psi_j - s |y_j|^2 / 2 with slope eta = h + r + s x. The
    returned report also re-solves the concave single-fiber problem at the
    posterior barycenter under psi' and records how well it reproduces the
    posterior weights.
    """
    psi = np.asarray(psi, dtype=float)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    s = float(s)
    if s < 0.0:
        raise StructuralError("s must be nonnegative")
    atoms = nu.atoms
    eta = h + r + s * x
    tilted = psi - 0.5 * s * np.sum(atoms ** 2, axis=1)
    logits = np.log(nu.weights) + tilted + atoms @ eta
    logits -= logits.max()
    w = np.exp(logits)
    w /= w.sum()
    bary = w @ atoms

    cfg = config if config is not None else SolverConfig()
    h_rec, _, w_rec = inner_dual_solve(bary, tilted, nu, cfg,
                                       check_interior=False, h0=eta)
    return RestartReport(eta=eta, weights=w, barycenter=bary,
                         recovered_h=h_rec, recovered_weights=w_rec,
                         max_weight_dev=float(np.max(np.abs(w - w_rec))))
