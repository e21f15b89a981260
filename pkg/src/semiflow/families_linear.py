"""Linear building-block transition operators on grid functions.

Two kernels are provided:

* the Gaussian heat-with-drift operator  f(x) -> E[f(x + sigma W_t + lambda t)],
  evaluated as the exact Gaussian integral of the piecewise-(multi)linear
  reconstruction of f.  The integral over each grid cell is expressed through
  differences of the normal CDF and its first partial moment, so the operator
  is exact for linear data, has nonnegative weights (hence is monotone), and
  stays well behaved when sqrt(t) is far smaller than the grid spacing, which
  is the regime every deep dyadic level enters.  The kernel is truncated at
  8 standard deviations per axis; the truncated tail mass (< 1e-15) is
  dropped, not renormalized, preserving the zero-extension semantics.

* the geometric Brownian motion operator f(x) -> E[f(x X_t)] with
  X_t = exp((mu - sigma^2/2) t + sigma W_t), evaluated by Gauss-Hermite
  quadrature in the Brownian variable with f read through clamped linear
  interpolation.  Values escaping the box are clamped; a tracked trusted
  interior radius marks the nodes where the escaping lognormal mass is below
  1e-10, and norms are restricted to that interior.

In 2D only diagonal (and scalar) diffusion matrices are supported, through
tensor-product application of the 1D kernel along each axis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import ndtr, ndtri

from .chernoff import GeneratingFamilyDescriptor, check_family_contract
from .state_space import (
    Grid,
    GridFunction,
    NormSpec,
    interp_eval,
    sample_function,
    with_values,
)

__all__ = [
    "HeatDriftParams",
    "GbmParams",
    "heat_drift_step",
    "gbm_step",
    "make_heat_family",
    "make_gbm_linear_family",
    "make_identity_base_family",
    "gbm_trusted_radius",
    "gbm_growth_rate",
    "central_diff",
    "second_diff",
]

KERNEL_CUTOFF_SIGMAS = 8.0
GBM_ESCAPE_THRESHOLD = 1e-10
# upper-tail normal quantile at the escape threshold
_Z_ESCAPE = float(-ndtri(GBM_ESCAPE_THRESHOLD))

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _phi(z):
    return np.exp(-0.5 * z * z) / _SQRT2PI


@dataclass(frozen=True)
class HeatDriftParams:
    """Drift vector and diffusion scale(s) of the Gaussian transition kernel.

    sigma is a scalar for dim 1; for dim 2 a scalar (isotropic) or a pair of
    per-axis scales (diagonal diffusion matrix).
    """

    drift: tuple[float, ...]
    sigma: tuple[float, ...]

    @staticmethod
    def create(drift, sigma, dim: int = 1) -> "HeatDriftParams":
        d = (float(drift),) * 1 if np.isscalar(drift) else tuple(float(v) for v in drift)
        if np.isscalar(drift) and dim == 2:
            d = (float(drift), float(drift))
        s = (float(sigma),) * dim if np.isscalar(sigma) else tuple(float(v) for v in sigma)
        if len(d) != dim or len(s) != dim:
            raise ValueError("drift/sigma length must match dim")
        if not all(np.isfinite(d)) or not all(np.isfinite(s)):
            raise ValueError("params must be finite")
        return HeatDriftParams(drift=d, sigma=s)


@dataclass(frozen=True)
class GbmParams:
    """GBM drift/volatility with quadrature size and weight exponent.

    The growth constant omega = p (mu + (p-1) sigma^2 / 2)^+ controls the
    declared envelopes e^{omega t} of the family in the weighted norm.
    """

    mu: float
    sigma: float
    quad_points: int = 64
    p: float = 3.0

    def __post_init__(self):
        if self.quad_points < 8:
            raise ValueError("quadrature node count must be >= 8")
        if not self.p > 1:
            raise ValueError("weight exponent p must be > 1")

    @property
    def omega(self) -> float:
        return gbm_growth_rate([(self.mu, self.sigma)], self.p)


def gbm_growth_rate(mu_sigma_pairs, p: float) -> float:
    """omega = max over the parameter set of p (mu + (p-1) sigma^2 / 2)^+."""
    return max(max(0.0, p * (mu + (p - 1) * sig * sig / 2.0))
               for mu, sig in mu_sigma_pairs)


# ---------------------------------------------------------------------------
# 1D heat kernel: exact Gaussian-cell quadrature
# ---------------------------------------------------------------------------

def _hat_weights(delta: np.ndarray, s: float, h: float) -> np.ndarray:
    """Integral of the unit hat at 0 against the N(delta, s^2) density.

    Exact formula from CDF differences and first partial moments over the two
    half-cells of the hat support [-h, h].
    """
    za1 = (-h - delta) / s
    zb1 = (0.0 - delta) / s
    zb2 = (h - delta) / s
    i0_1 = ndtr(zb1) - ndtr(za1)
    i1_1 = s * (_phi(za1) - _phi(zb1))
    i0_2 = ndtr(zb2) - ndtr(zb1)
    i1_2 = s * (_phi(zb1) - _phi(zb2))
    return (i1_1 + (delta + h) * i0_1 + (h - delta) * i0_2 - i1_2) / h


def _ramp_weights(x_edge: float, h: float, means: np.ndarray, s: float,
                  rising: bool) -> np.ndarray:
    """Gaussian mass of the phantom boundary ramp cell adjacent to x_edge.

    rising=True is the left ramp on [x_edge - h, x_edge] growing 0 -> 1;
    rising=False the right ramp on [x_edge, x_edge + h] falling 1 -> 0.
    """
    if rising:
        a, b = x_edge - h, x_edge
    else:
        a, b = x_edge, x_edge + h
    za = (a - means) / s
    zb = (b - means) / s
    i0 = ndtr(zb) - ndtr(za)
    i1 = s * (_phi(za) - _phi(zb))
    if rising:
        return (i1 + (means - a) * i0) / h
    return ((b - means) * i0 - i1) / h


def _heat_axis_apply(mesh: np.ndarray, axis_nodes: np.ndarray, h: float,
                     t: float, shifts: np.ndarray, sigmas: np.ndarray,
                     ext_mode: str) -> np.ndarray:
    """Apply the 1D heat kernel along axis 0 of mesh for a batch of candidates.

    mesh has shape (n, ...); shifts[c] = lambda_c * t and sigmas[c] are the
    per-candidate drift displacement and diffusion scale.  Returns an array of
    shape (C, n, ...).
    """
    n = mesh.shape[0]
    trailing = mesh.shape[1:]
    flat = mesh.reshape(n, -1)
    C = len(shifts)
    x0 = axis_nodes[0]
    xN = axis_nodes[-1]
    out = np.empty((C, n, flat.shape[1]))

    s_arr = np.asarray([sig * math.sqrt(t) for sig in sigmas])
    for c in range(C):
        s = s_arr[c]
        shift = shifts[c]
        if s == 0.0:
            # pure drift: evaluate the extended piecewise-linear reconstruction
            pts = axis_nodes + shift
            u = (np.clip(pts, x0, xN) - x0) / h
            j = np.minimum(u.astype(np.int64), n - 2)
            w = (u - j)[:, None]
            vals = (1.0 - w) * flat[j] + w * flat[j + 1]
            if ext_mode == "zero":
                vals[(pts < x0) | (pts > xN)] = 0.0
            out[c] = vals
            continue

        reach = KERNEL_CUTOFF_SIGMAS * s + h
        r_lo = math.ceil((-reach - shift) / h)
        r_hi = math.floor((reach - shift) / h)
        r = np.arange(r_lo, r_hi + 1)
        kernel = _hat_weights(r * h + shift, s, h)
        taps = kernel.size

        pad = np.zeros((n + taps - 1, flat.shape[1]))
        pad[r_hi:r_hi + n] = flat
        windows = np.lib.stride_tricks.sliding_window_view(pad, taps, axis=0)
        # windows[i, :, j] = pad[i + j] = f[i - r_hi + j]; kernel index r = r_hi - j
        res = windows @ kernel[::-1]

        # boundary corrections near each edge (phantom ramp cells of the
        # zero-padded convolution, and constant tails in clamp mode)
        means = axis_nodes + shift
        left = np.abs(means - x0) <= reach
        right = np.abs(means - xN) <= reach
        if np.any(left):
            m = means[left]
            ramp = _ramp_weights(x0, h, m, s, rising=True)
            if ext_mode == "clamp":
                res[left] += np.outer(ndtr((x0 - m) / s) - ramp, flat[0])
            else:
                res[left] -= np.outer(ramp, flat[0])
        if np.any(right):
            m = means[right]
            ramp = _ramp_weights(xN, h, m, s, rising=False)
            if ext_mode == "clamp":
                res[right] += np.outer(1.0 - ndtr((xN - m) / s) - ramp, flat[-1])
            else:
                res[right] -= np.outer(ramp, flat[-1])
        # clamp mode also picks up full tails for means far outside the box
        if ext_mode == "clamp":
            far_l = means < x0 - reach
            far_r = means > xN + reach
            if np.any(far_l):
                res[far_l] = flat[0]
            if np.any(far_r):
                res[far_r] = flat[-1]
        out[c] = res
    return out.reshape(C, n, *trailing)


def heat_multi_step(f: GridFunction, t: float, drifts: np.ndarray,
                    sigmas: np.ndarray) -> np.ndarray:
    """Batch of heat-with-drift steps sharing one input state.

    drifts has shape (C, dim); sigmas shape (C,) (isotropic per candidate) or
    (C, dim) for diagonal diffusion.  Returns values of shape (C, n_nodes, m).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    drifts = np.atleast_2d(np.asarray(drifts, dtype=np.float64))
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if sigmas.ndim == 1:
        sigmas = np.repeat(sigmas[:, None], f.grid.dim, axis=1)
    C = drifts.shape[0]
    if t == 0.0:
        return np.broadcast_to(f.values, (C, *f.values.shape)).copy()

    mesh = f.as_mesh()
    if f.grid.dim == 1:
        res = _heat_axis_apply(mesh, f.grid.axis(0), f.grid.h[0], t,
                               drifts[:, 0] * t, sigmas[:, 0], f.extension_mode)
        return res.reshape(C, f.grid.n_nodes, f.codomain_dim)

    # dim 2: tensor-product kernel, one axis at a time
    out = np.empty((C, *mesh.shape))
    for c in range(C):
        step0 = _heat_axis_apply(mesh, f.grid.axis(0), f.grid.h[0], t,
                                 drifts[c:c + 1, 0] * t, sigmas[c:c + 1, 0],
                                 f.extension_mode)[0]
        moved = np.moveaxis(step0, 1, 0)
        step1 = _heat_axis_apply(moved, f.grid.axis(1), f.grid.h[1], t,
                                 drifts[c:c + 1, 1] * t, sigmas[c:c + 1, 1],
                                 f.extension_mode)[0]
        out[c] = np.moveaxis(step1, 0, 1)
    return out.reshape(C, f.grid.n_nodes, f.codomain_dim)


def heat_drift_step(f: GridFunction, t: float, params: HeatDriftParams) -> GridFunction:
    """One Gaussian transition step; t = 0 returns f unchanged."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return f
    vals = heat_multi_step(f, t, np.array([params.drift]),
                           np.array([params.sigma]))[0]
    return with_values(f, vals)


# ---------------------------------------------------------------------------
# GBM transition operator
# ---------------------------------------------------------------------------

def gbm_trusted_radius(mu_sigma_pairs, x_max: float, horizon: float) -> float:
    """Radius inside which the lognormal mass escaping the box stays below
    the escape threshold for every composition of steps up to the horizon."""
    drift = max(0.0, max((mu - sig * sig / 2.0) for mu, sig in mu_sigma_pairs))
    sig_max = max(abs(sig) for _, sig in mu_sigma_pairs)
    return x_max * math.exp(-drift * horizon - _Z_ESCAPE * sig_max * math.sqrt(horizon))


def _gbm_escape_mass(x: np.ndarray, t: float, mu: float, sigma: float,
                     x_max: float) -> np.ndarray:
    """P(|x X_t| > x_max) for the one-step lognormal factor."""
    ax = np.abs(x)
    out = np.zeros_like(ax)
    pos = ax > 0
    if sigma == 0.0 or t == 0.0:
        out[pos] = (ax[pos] * math.exp(mu * t) > x_max).astype(float)
        return out
    z = (np.log(x_max / ax[pos]) - (mu - sigma * sigma / 2.0) * t) / (
        abs(sigma) * math.sqrt(t))
    out[pos] = 1.0 - ndtr(z)
    return out


def gbm_step(f: GridFunction, t: float, params: GbmParams,
             trusted_radius: float | None = None) -> GridFunction:
    """E[f(x X_t)] by Gauss-Hermite quadrature in the Brownian variable.

    f is read through clamped linear interpolation; x = 0 maps to f(0)
    exactly.  Emits a warning (never fails) when the one-step escaping mass
    exceeds the threshold at some node of the declared trusted interior.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if f.grid.dim != 1:
        raise ValueError("GBM operator is one-dimensional")
    if f.extension_mode != "clamp":
        raise ValueError("GBM operator requires clamp extension")
    if t == 0.0:
        return f
    x = f.grid.axis(0)
    if trusted_radius is not None:
        inside = np.abs(x) <= trusted_radius
        esc = _gbm_escape_mass(x[inside], t, params.mu, params.sigma,
                               f.grid.x_max[0])
        if np.any(esc > GBM_ESCAPE_THRESHOLD):
            warnings.warn(
                "gbm_step: escaping lognormal mass exceeds threshold inside "
                "the trusted interior",
                stacklevel=2,
            )
    z, w = hermgauss(params.quad_points)
    factors = np.exp((params.mu - params.sigma**2 / 2.0) * t
                     + params.sigma * math.sqrt(2.0 * t) * z)
    pts = x[:, None] * factors[None, :]
    mesh = f.values  # (n, m)
    out = np.empty_like(mesh)
    for comp in range(f.codomain_dim):
        sampled = np.interp(pts, x, mesh[:, comp])  # np.interp clamps at edges
        out[:, comp] = sampled @ w / math.sqrt(math.pi)
    return with_values(f, out)


# ---------------------------------------------------------------------------
# finite-difference derivatives for analytic generators
# ---------------------------------------------------------------------------

def central_diff(mesh: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second-order first derivative; one-sided 2nd-order stencils at the ends."""
    m = np.moveaxis(mesh, axis, 0)
    out = np.empty_like(m)
    out[1:-1] = (m[2:] - m[:-2]) / (2.0 * h)
    out[0] = (-3.0 * m[0] + 4.0 * m[1] - m[2]) / (2.0 * h)
    out[-1] = (3.0 * m[-1] - 4.0 * m[-2] + m[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def second_diff(mesh: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second-order second derivative; one-sided stencils at the ends."""
    m = np.moveaxis(mesh, axis, 0)
    out = np.empty_like(m)
    out[1:-1] = (m[2:] - 2.0 * m[1:-1] + m[:-2]) / (h * h)
    out[0] = (2.0 * m[0] - 5.0 * m[1] + 4.0 * m[2] - m[3]) / (h * h)
    out[-1] = (2.0 * m[-1] - 5.0 * m[-2] + 4.0 * m[-3] - m[-4]) / (h * h)
    return np.moveaxis(out, 0, axis)


def heat_generator_values(f: GridFunction, params: HeatDriftParams) -> np.ndarray:
    """(1/2) tr(sigma sigma^T D^2 f) + <lambda, grad f> by central differences."""
    mesh = f.as_mesh()
    out = np.zeros_like(mesh)
    for a in range(f.grid.dim):
        h = f.grid.h[a]
        out += 0.5 * params.sigma[a] ** 2 * second_diff(mesh, h, axis=a)
        out += params.drift[a] * central_diff(mesh, h, axis=a)
    return out.reshape(f.grid.n_nodes, f.codomain_dim)


# ---------------------------------------------------------------------------
# family descriptors
# ---------------------------------------------------------------------------

def make_heat_family(params: HeatDriftParams, norm: NormSpec, grid: Grid,
                     name: str = "heat") -> GeneratingFamilyDescriptor:
    """Heat-with-drift generating family: a sup-norm contraction, so the
    declared envelopes are alpha(R, t) = R and beta(R, t) = 1."""
    zero = sample_function("zero", grid)

    def step(t, f):
        return heat_drift_step(f, t, params)

    def generator(f):
        return with_values(f, heat_generator_values(f, params))

    fam = GeneratingFamilyDescriptor(
        name=name,
        state_kind="grid",
        step=step,
        alpha=lambda R, t: R,
        beta=lambda R, t: 1.0,
        zero_state=zero,
        norm=norm,
        lip_growth=lambda c, t: c,
        analytic_generator=generator,
        minus_conjugate=True,
        kernel_sigma_max=max(params.sigma),
        params={"kind": "heat", "drift": params.drift, "sigma": params.sigma},
    )
    check_family_contract(fam, probe_states=[zero])
    return fam


def make_identity_base_family(grid: Grid, norm: NormSpec) -> GeneratingFamilyDescriptor:
    """The identity semigroup I0(t) = id, a trivial linear base for
    Lipschitz perturbations."""
    zero = sample_function("zero", grid)
    fam = GeneratingFamilyDescriptor(
        name="identity_base",
        state_kind="grid",
        step=lambda t, f: f,
        alpha=lambda R, t: R,
        beta=lambda R, t: 1.0,
        zero_state=zero,
        norm=norm,
        lip_growth=lambda c, t: c,
        analytic_generator=lambda f: with_values(f, np.zeros_like(f.values)),
        minus_conjugate=False,
        params={"kind": "identity_base"},
    )
    check_family_contract(fam, probe_states=[zero])
    return fam


def make_gbm_linear_family(params: GbmParams, grid: Grid,
                           trust_horizon: float = 1.0) -> GeneratingFamilyDescriptor:
    """Single-(mu, sigma) GBM family on the weighted space.

    Envelopes alpha(R, t) = e^{omega t} R and beta(R, t) = e^{omega t} with
    omega = p (mu + (p-1) sigma^2 / 2)^+; generator mu x f' + sigma^2 x^2 f''/2.
    The weighted norm is mandatory and is restricted to the trusted interior.
    """
    norm = NormSpec(kind="weighted", p=params.p)
    pairs = [(params.mu, params.sigma)]
    omega = params.omega
    radius = gbm_trusted_radius(pairs, grid.x_max[0], trust_horizon)
    mask = np.abs(grid.node_coords()[:, 0]) <= radius
    zero = GridFunction(grid, 1, np.zeros((grid.n_nodes, 1)), extension_mode="clamp")

    def step(t, f):
        return gbm_step(f, t, params, trusted_radius=radius)

    def generator(f):
        mesh = f.as_mesh()
        x = grid.axis(0).reshape(-1, *([1] * (mesh.ndim - 1)))
        vals = (params.mu * x * central_diff(mesh, grid.h[0])
                + 0.5 * params.sigma**2 * x**2 * second_diff(mesh, grid.h[0]))
        return with_values(f, vals.reshape(grid.n_nodes, f.codomain_dim))

    fam = GeneratingFamilyDescriptor(
        name="gbm",
        state_kind="grid",
        step=step,
        alpha=lambda R, t: math.exp(omega * t) * R,
        beta=lambda R, t: math.exp(omega * t),
        zero_state=zero,
        norm=norm,
        lip_growth=lambda c, t: math.exp(omega * t) * c,
        analytic_generator=generator,
        minus_conjugate=True,
        comparison_mask=mask,
        params={"kind": "gbm", "mu": params.mu, "sigma": params.sigma,
                "p": params.p, "omega": omega, "trusted_radius": radius},
    )
    check_family_contract(fam, probe_states=[zero])
    return fam
