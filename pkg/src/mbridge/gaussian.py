"""Closed forms for the centered Gaussian case.

For marginals N(b, S0) and N(b, S1) with D = S1 - S0 positive definite, the
optimal martingale coupling is jointly Gaussian with covariance
[[S0, S0], [S0, S1]] and everything is explicit:

* entropy value             0.5 log det(S1) / det(D)
* dual potentials           phibar(xb) = -xb' D xb / 2 + 0.5 log det(S1)/det(D)
                            psi(y)    = y' (S1^{-1} - D^{-1}) y / 2
                            h(x)      = D^{-1} x
* base measure              N(0, D^{-1} S0 D^{-1})
* martingale volatility     sigma_t = D ((1-t) I + t D)^{-1}
* flat-volatility analogue  volatility D^{1/2} under the spectral time change
                            tau_k(t) = t lam_k / (1 - t + t lam_k)

The quadrature routines integrate the schedules numerically so that the
closed forms above are checked by an independent route in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import NotInConvexOrder, StructuralError

MAX_DIMENSION = 512


def _as_spd(mat, name, tol_scale=1e-12):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim == 0:
        mat = mat.reshape(1, 1)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise StructuralError(f"{name} must be a square matrix")
    if mat.shape[0] > MAX_DIMENSION:
        raise StructuralError(f"{name} exceeds the supported dimension cap")
    scale = max(1.0, float(np.max(np.abs(mat))))
    if np.max(np.abs(mat - mat.T)) > 1e-12 * scale:
        raise StructuralError(f"{name} must be symmetric")
    mat = 0.5 * (mat + mat.T)
    w = np.linalg.eigvalsh(mat)
    if w[0] <= tol_scale * max(w[-1], 0.0) or w[0] <= 0.0:
        raise StructuralError(f"{name} must be positive definite")
    return mat


@dataclass(frozen=True)
class GaussianMsb:
    """Closed-form solution bundle for a Gaussian pair."""

    sigma0: np.ndarray
    sigma1: np.ndarray
    delta: np.ndarray
    mean: np.ndarray
    joint_covariance: np.ndarray
    entropy_value: float
    base_covariance: np.ndarray
    phibar_quadratic: np.ndarray   # phibar(xb) = xb' Q xb + phibar_constant
    phibar_constant: float
    psi_quadratic: np.ndarray      # psi(y) = y' Q y
    h_matrix: np.ndarray           # h(x) = H x

    @property
    def dim(self):
        return self.delta.shape[0]


def gaussian_msb_closed_form(sigma0, sigma1, mean0=None, mean1=None):
    """Solve the Gaussian pair N(b, sigma0) -> N(b, sigma1) in closed form.

    The increment covariance D = sigma1 - sigma0 must be positive definite
    (eigenvalues above 1e-12 times the largest), otherwise the pair is not in
    strict convex order for this construction and NotInConvexOrder is raised.
    Means, when given, must coincide; the potentials are reported for the
    centered pair and all covariances are translation invariant.
    """
    s0 = _as_spd(sigma0, "sigma0")
    s1 = _as_spd(sigma1, "sigma1")
    if s0.shape != s1.shape:
        raise StructuralError("sigma0 and sigma1 have different shapes")
    d = s0.shape[0]
    b0 = np.zeros(d) if mean0 is None else np.asarray(mean0, float).ravel()
    b1 = b0 if mean1 is None else np.asarray(mean1, float).ravel()
    if b0.shape != (d,) or b1.shape != (d,):
        raise StructuralError("mean vectors have the wrong dimension")
    if np.max(np.abs(b0 - b1)) > 1e-12 * max(1.0, float(np.abs(b0).max(initial=0.0))):
        raise NotInConvexOrder("marginal means differ; no martingale coupling")

    delta = s1 - s0
    w = np.linalg.eigvalsh(delta)
    if w[0] <= 1e-12 * max(w[-1], 0.0) or w[0] <= 0.0:
        raise NotInConvexOrder(
            "sigma1 - sigma0 is not positive definite; the Gaussian closed "
            "form needs strict convex order")

    delta_inv = np.linalg.inv(delta)
    sign1, logdet_s1 = np.linalg.slogdet(s1)
    sign_d, logdet_d = np.linalg.slogdet(delta)
    assert sign1 > 0 and sign_d > 0
    entropy = 0.5 * (logdet_s1 - logdet_d)

    joint = np.block([[s0, s0], [s0, s1]])
    base_cov = delta_inv @ s0 @ delta_inv
    psi_quad = 0.5 * (np.linalg.inv(s1) - delta_inv)

    return GaussianMsb(sigma0=s0, sigma1=s1, delta=delta, mean=b0,
                       joint_covariance=joint, entropy_value=float(entropy),
                       base_covariance=base_cov,
                       phibar_quadratic=-0.5 * delta,
                       phibar_constant=float(entropy),
                       psi_quadratic=psi_quad,
                       h_matrix=delta_inv)


def follmer_volatility_gaussian(delta, t):
    """Volatility matrix sigma_t = D ((1-t) I + t D)^{-1} of the Gaussian
    martingale bridge; at t=0 equal to D, at t=1 the identity."""
    delta = _as_spd(delta, "delta")
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise StructuralError("t must lie in [0, 1]")
    d = delta.shape[0]
    return delta @ np.linalg.inv((1.0 - t) * np.eye(d) + t * delta)


def _eigen(delta):
    delta = _as_spd(delta, "delta")
    lam, u = np.linalg.eigh(delta)
    return lam, u


def weighted_energy_quadrature(delta, epsabs=1e-12, epsrel=1e-12):
    """Numerically integrate 0.5 int_0^1 |sigma_t - I|_HS^2 / (1-t) dt.

    Per eigenvalue lam of D the integrand reduces to
    (lam-1)^2 (1-t) / ((1-t) + t lam)^2, which is continuous on [0, 1], and
    the integrals are summed over the spectrum. Closed form for comparison:
    0.5 (tr D - d - log det D).
    """
    lam, _ = _eigen(delta)
    total = 0.0
    worst = 0.0
    for ev in lam:
        def integrand(t, ev=ev):
            return (ev - 1.0) ** 2 * (1.0 - t) / ((1.0 - t) + t * ev) ** 2

        val, err = quad(integrand, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel,
                        limit=200)
        total += val
        worst = max(worst, err)
    if worst > 1e-9:
        raise StructuralError(
            f"quadrature failed to reach tolerance (error estimate {worst:.2e})")
    return 0.5 * total


def gaussian_energy_closed_form(delta):
    """0.5 (tr D - d - log det D), the weighted volatility energy."""
    delta = _as_spd(delta, "delta")
    _, logdet = np.linalg.slogdet(delta)
    return float(0.5 * (np.trace(delta) - delta.shape[0] - logdet))


@dataclass(frozen=True)
class BassComparison:
    """Spectral comparison of the bridge and its flat-volatility analogue."""

    bass_volatility: np.ndarray    # D^{1/2}
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    grid: np.ndarray
    bridge_schedule: np.ndarray    # (grid, eigen) covariance of N_t - N_0
    flat_schedule: np.ndarray      # same quantity through the time change
    max_discrepancy: float

    def time_change(self, t):
        """Per-eigenvalue time change tau_k(t) = t lam_k / (1 - t + t lam_k)."""
        t = np.asarray(t, dtype=float)
        lam = self.eigenvalues
        return (t[..., None] * lam) / (1.0 - t[..., None] + t[..., None] * lam)


def bass_comparison_gaussian(sigma0, sigma1, grid=None):
    """Check, eigenvalue by eigenvalue, that the bridge covariance schedule
    t lam^2 / (1 - t + t lam) equals the flat-volatility schedule tau(t) lam.

    The bridge side is integrated numerically (Ito isometry of the volatility
    schedule); the flat side is the time change applied to constant
    volatility D^{1/2}. Returns the two schedules on the grid and their
    maximal absolute discrepancy.
    """
    solution = gaussian_msb_closed_form(sigma0, sigma1)
    lam, u = _eigen(solution.delta)
    if grid is None:
        grid = np.linspace(0.0, 1.0, 101)
    grid = np.asarray(grid, dtype=float)

    sqrt_delta = (u * np.sqrt(lam)) @ u.T
    bridge = np.empty((grid.size, lam.size))
    flat = np.empty_like(bridge)
    for k, ev in enumerate(lam):
        def isometry(s, ev=ev):
            return (ev / ((1.0 - s) + s * ev)) ** 2

        for g, t in enumerate(grid):
            val, _ = quad(isometry, 0.0, float(t), epsabs=1e-14, epsrel=1e-13,
                          limit=200)
            bridge[g, k] = val
            tau = t * ev / (1.0 - t + t * ev)
            flat[g, k] = tau * ev
    return BassComparison(bass_volatility=sqrt_delta, eigenvalues=lam,
                          eigenvectors=u, grid=grid, bridge_schedule=bridge,
                          flat_schedule=flat,
                          max_discrepancy=float(np.max(np.abs(bridge - flat))))
