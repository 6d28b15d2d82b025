"""Forward scattering: fundamental solutions, reflection coefficient, spectrum.

The reflection coefficient of the star network is assembled from per-branch
fundamental solutions propagated to the node, in the pole-free rational form

    R = (i w Phi - H Phi + Psi) / (i w Phi + H Phi - Psi),

with Phi the product of node values and Psi the node derivative of that
product.  At zeros of Phi this yields R = -1 exactly.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import DegenerateFrequencyError, ParameterError, ReflectKitError
from .line_model import BoundarySetting, BranchSpec, StarNetwork

_NEUMANN_INIT = (1.0, 0.0)
_DIRICHLET_INIT = (0.0, 1.0)


@dataclass(frozen=True)
class FundamentalSolutionEval:
    value_at_0: float
    deriv_at_0: float
    omega: float
    setting: BoundarySetting
    wronskian_drift: float


@dataclass(frozen=True)
class CharFunctionsEval:
    phi: float
    psi: float
    omega: float
    setting: BoundarySetting


@dataclass(frozen=True)
class ReflectionTrace:
    """Sampled complex reflection coefficient over a frequency grid."""

    omegas: np.ndarray
    values: np.ndarray
    setting: BoundarySetting
    h_coupling: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "omegas", np.asarray(self.omegas, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))
        if self.omegas.shape != self.values.shape:
            raise ParameterError("trace grids and values must have equal length")


def _branch_nodes(branch: BranchSpec, omegas, setting: BoundarySetting):
    """(value, derivative) of the fundamental solution at x=0, per omega."""
    v0, w0 = _NEUMANN_INIT if setting is BoundarySetting.NEUMANN else _DIRICHLET_INIT
    return _kernels.propagate_endpoints(
        branch.q_cells(), branch.dx, np.asarray(omegas, dtype=float), v0, w0
    )


def branch_trace(branch: BranchSpec, omegas, setting: BoundarySetting):
    """Full y(x_j) traces along the branch grid, plus node value/derivative."""
    v0, w0 = _NEUMANN_INIT if setting is BoundarySetting.NEUMANN else _DIRICHLET_INIT
    return _kernels.propagate_trace(
        branch.q_cells(), branch.dx, np.asarray(omegas, dtype=float), v0, w0
    )


def fundamental_solution(branch: BranchSpec, omega: float,
                         setting: BoundarySetting) -> FundamentalSolutionEval:
    om = np.array([float(omega)])
    vn, wn, vd, wd, drift = _kernels.propagate_joint(branch.q_cells(), branch.dx, om)
    if setting is BoundarySetting.NEUMANN:
        value, deriv = vn[0], wn[0]
    else:
        value, deriv = vd[0], wd[0]
    return FundamentalSolutionEval(
        value_at_0=float(value),
        deriv_at_0=float(deriv),
        omega=float(omega),
        setting=setting,
        wronskian_drift=float(drift[0]),
    )


def char_functions(network: StarNetwork, omegas, setting: BoundarySetting):
    """Phi(w) = prod_j phi_j(0, w) and Psi(w) = sum_j phi'_j prod_{k!=j} phi_k."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    vals = np.empty((len(network.branches), omegas.size))
    ders = np.empty_like(vals)
    for j, b in enumerate(network.branches):
        vals[j], ders[j] = _branch_nodes(b, omegas, setting)
    phi = np.prod(vals, axis=0)
    psi = np.zeros(omegas.size)
    for j in range(vals.shape[0]):
        others = np.prod(np.delete(vals, j, axis=0), axis=0) if vals.shape[0] > 1 \
            else np.ones(omegas.size)
        psi += ders[j] * others
    return phi, psi


def char_functions_eval(network: StarNetwork, omega: float,
                        setting: BoundarySetting) -> CharFunctionsEval:
    phi, psi = char_functions(network, [omega], setting)
    return CharFunctionsEval(phi=float(phi[0]), psi=float(psi[0]),
                             omega=float(omega), setting=setting)


def _reflection_values(network: StarNetwork, omegas, setting: BoundarySetting):
    omegas = np.asarray(omegas, dtype=float)
    phi, psi = char_functions(network, omegas, setting)
    u = network.coupling_h * phi - psi           # real
    v = omegas * phi                             # real
    with np.errstate(invalid="ignore"):
        r = (-u + 1j * v) / (u + 1j * v)
    # Phi and Psi share a root at degenerate resonances (equal-length
    # branches); the continuous limit there is R = -1.
    bad = ~np.isfinite(r)
    if np.any(bad):
        r[bad] = -1.0
    return r


def reflection_coefficient(network: StarNetwork, omega: float,
                           setting: BoundarySetting) -> complex:
    if omega == 0.0:
        raise ParameterError("omega = 0 is excluded (DC limit out of scope)")
    return complex(_reflection_values(network, np.array([float(omega)]), setting)[0])


def scattering_solution(network: StarNetwork, omega: float,
                        setting: BoundarySetting):
    """Reflection coefficient plus branch amplitudes alpha_j = (1+R)/phi_j(0).

    At a resonance (some phi_j = 0, hence R = -1) the removable 0/0 ratio is
    recovered by one Richardson step: the centered average at omega +- delta.
    """
    if omega == 0.0:
        raise ParameterError("omega = 0 is excluded")
    R = reflection_coefficient(network, omega, setting)
    alphas = []
    delta = 1e-5 * max(1.0, abs(omega))
    for branch in network.branches:
        val, _ = _branch_nodes(branch, np.array([omega]), setting)
        val = float(val[0])
        if abs(val) > 1e-9:
            alphas.append((1.0 + R) / val)
            continue
        side = []
        for w in (omega - delta, omega + delta):
            Rw = reflection_coefficient(network, w, setting)
            vw, _ = _branch_nodes(branch, np.array([w]), setting)
            if abs(vw[0]) < 1e-12:
                continue
            side.append((1.0 + Rw) / float(vw[0]))
        if len(side) < 2:
            raise DegenerateFrequencyError(
                f"alpha extrapolation failed at omega={omega} (neighbors singular)"
            )
        alphas.append(0.5 * (side[0] + side[1]))
    return R, alphas


def sweep(network: StarNetwork, omega_grid, setting: BoundarySetting) -> ReflectionTrace:
    """Element-wise reflection coefficient over a strictly increasing grid."""
    omegas = np.asarray(omega_grid, dtype=float)
    if omegas.size < 1 or np.any(np.diff(omegas) <= 0.0):
        raise ParameterError("omega grid must be strictly increasing")
    if np.any(omegas == 0.0):
        raise ParameterError("omega grid must not contain 0")
    values = _reflection_values(network, omegas, setting)
    return ReflectionTrace(omegas=omegas, values=values, setting=setting,
                           h_coupling=network.coupling_h)


@dataclass(frozen=True)
class HSamples:
    """Real samples of h(w) = H + i w (R-1)/(1+R); resonances masked."""

    omegas: np.ndarray
    values: np.ndarray
    mask: np.ndarray  # True where sample is excluded as a resonance


def h_function(trace: ReflectionTrace, H: float | None = None,
               imag_tol: float = 1e-6) -> HSamples:
    if H is None:
        if trace.h_coupling is None:
            raise ParameterError("trace carries no H; pass it explicitly")
        H = trace.h_coupling
    mask = np.abs(1.0 + trace.values) <= 1e-9
    h = np.zeros_like(trace.omegas)
    ok = ~mask
    hc = H + 1j * trace.omegas[ok] * (trace.values[ok] - 1.0) / (1.0 + trace.values[ok])
    worst = np.max(np.abs(hc.imag)) if hc.size else 0.0
    if worst >= imag_tol:
        raise ReflectKitError(
            f"h(w) imaginary residue {worst:.3e} exceeds {imag_tol:.1e}; "
            "trace is not consistent with a lossless network"
        )
    h[ok] = hc.real
    return HSamples(omegas=trace.omegas, values=h, mask=mask)


@dataclass(frozen=True)
class SpectrumResult:
    lambdas: np.ndarray
    tangency_flags: tuple


def compact_spectrum(network: StarNetwork, h_value: float,
                     setting: BoundarySetting, lambda_max: float) -> SpectrumResult:
    """All lambda in (0, lambda_max] with Psi(lambda) = h * Phi(lambda).

    Sign-change scan on a grid of step pi/(8 * sum tau), bisection refined to
    1e-10; grid tangencies (|g| minimum without sign change) are flagged.
    """
    if not lambda_max > 0.0:
        raise ParameterError("lambda_max must be positive")
    step = np.pi / (8.0 * network.total_tau)
    grid = np.arange(step * 1e-3, lambda_max + step, step)
    grid = grid[grid <= lambda_max + 1e-12]
    phi, psi = char_functions(network, grid, setting)
    g = psi - h_value * phi

    def g_at(lam):
        p, s = char_functions(network, np.array([lam]), setting)
        return float(s[0] - h_value * p[0])

    roots = []
    flags = []
    for i in range(len(grid) - 1):
        if g[i] == 0.0:
            roots.append(float(grid[i]))
        elif g[i] * g[i + 1] < 0.0:
            roots.append(float(brentq(g_at, grid[i], grid[i + 1], xtol=1e-10)))
        elif 0 < i and abs(g[i]) < abs(g[i - 1]) and abs(g[i]) < abs(g[i + 1]):
            # local |g| minimum without a sign change: possible double root
            scale = max(abs(g[i - 1]), abs(g[i + 1]))
            if abs(g[i]) < 1e-6 * max(scale, 1.0):
                flags.append(float(grid[i]))
    return SpectrumResult(lambdas=np.array(roots), tangency_flags=tuple(flags))
