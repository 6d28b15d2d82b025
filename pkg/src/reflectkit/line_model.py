"""Physical line profiles, traveling-time coordinates and star-network assembly.

A nonuniform lossless line described by L(z), C(z) is mapped to traveling-time
coordinates x(z) = int sqrt(L C) dz, where the tension obeys a Schrodinger
equation with potential q(x) = sqrt(Zc) * d^2/dx^2 (1/sqrt(Zc)),
Zc = sqrt(L/C).  Branches meet at a central node whose Kirchhoff condition
carries the coupling constant H = -(1/2) * sum_j Zc_j'(0) / Zc0.
"""

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InvalidProfileError, ParameterError, SingularTrajectoryError


class BoundarySetting(enum.Enum):
    """Terminal condition at the far end of every finite branch."""

    NEUMANN = "neumann"      # open circuit: y'(tau) = 0
    DIRICHLET = "dirichlet"  # short circuit: y(tau) = 0

    @classmethod
    def parse(cls, text):
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ParameterError(f"unknown boundary setting {text!r}") from None


@dataclass(frozen=True)
class LineProfile:
    """Sampled L(z), C(z) of one physical line on a uniform z grid."""

    z_grid: np.ndarray
    inductance: np.ndarray
    capacitance: np.ndarray
    end_uniformity_rtol: float = 1e-9
    check_end_uniformity: bool = True

    def __post_init__(self):
        z = np.asarray(self.z_grid, dtype=float)
        L = np.asarray(self.inductance, dtype=float)
        C = np.asarray(self.capacitance, dtype=float)
        object.__setattr__(self, "z_grid", z)
        object.__setattr__(self, "inductance", L)
        object.__setattr__(self, "capacitance", C)
        if z.ndim != 1 or z.size < 4:
            raise InvalidProfileError("profile needs at least 4 samples")
        if L.shape != z.shape or C.shape != z.shape:
            raise InvalidProfileError("L, C must match the z grid")
        if np.any(L <= 0.0) or np.any(C <= 0.0):
            raise InvalidProfileError("L(z) and C(z) must be strictly positive")
        dz = np.diff(z)
        if np.any(dz <= 0.0):
            raise InvalidProfileError("z grid must be strictly increasing")
        if np.max(np.abs(dz - dz[0])) > 1e-9 * abs(dz[0]):
            raise InvalidProfileError("z grid must be uniform")
        if self.check_end_uniformity:
            zc = self.zc()
            for end in (zc[:3], zc[-3:]):
                ref = end[0]
                if np.max(np.abs(end - ref)) > self.end_uniformity_rtol * abs(ref):
                    raise InvalidProfileError(
                        "characteristic impedance not uniform near the extremities"
                    )

    def zc(self):
        return np.sqrt(self.inductance / self.capacitance)


@dataclass(frozen=True)
class BranchSpec:
    """One branch in traveling-time coordinates.

    q holds potential samples on a uniform grid over [0, tau]; zc_samples,
    when present, holds the characteristic impedance on the same grid and
    enables the Riccati cross-check.
    """

    tau: float
    q: np.ndarray
    zc_at_node: float
    zc_slope_at_node: float
    zc_samples: np.ndarray | None = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "q", q)
        if self.zc_samples is not None:
            object.__setattr__(
                self, "zc_samples", np.asarray(self.zc_samples, dtype=float)
            )
        if not self.tau > 0.0:
            raise ParameterError("branch traveling time must be positive")
        if q.ndim != 1 or q.size < 4:
            raise ParameterError("branch potential needs at least 4 samples")
        if not self.zc_at_node > 0.0:
            raise ParameterError("node-side characteristic impedance must be positive")

    @property
    def dx(self):
        return self.tau / (self.q.size - 1)

    def q_cells(self):
        """Piecewise-constant cell potentials (midpoint of linear interpolant)."""
        return 0.5 * (self.q[:-1] + self.q[1:])


@dataclass(frozen=True)
class StarNetwork:
    """Branch collection plus central-node data."""

    branches: tuple
    coupling_h: float
    zc0: float

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if len(self.branches) < 1:
            raise ParameterError("network needs at least one branch")
        if not self.zc0 > 0.0:
            raise ParameterError("zc0 must be positive")
        for b in self.branches:
            if abs(b.zc_at_node - self.zc0) > 1e-9 * self.zc0:
                raise ParameterError(
                    "characteristic impedance discontinuous at the central node"
                )

    @property
    def total_tau(self):
        return sum(b.tau for b in self.branches)


def liouville_transform(profile: LineProfile, resample_count: int) -> BranchSpec:
    """Map a physical profile to traveling-time coordinates.

    tau is the composite-trapezoid integral of sqrt(LC) over the z grid; Zc
    is cubic-spline interpolated onto a uniform x grid of resample_count
    points; q = sqrt(Zc) d^2/dx^2 (1/sqrt(Zc)) by centered second
    differences with one-sided 4-point endpoint stencils.
    """
    if resample_count < 8:
        raise ParameterError("resample_count must be at least 8")
    slowness = np.sqrt(profile.inductance * profile.capacitance)
    dz = profile.z_grid[1] - profile.z_grid[0]
    x_of_z = np.concatenate(
        ([0.0], np.cumsum(0.5 * dz * (slowness[:-1] + slowness[1:])))
    )
    tau = float(x_of_z[-1])
    spline = CubicSpline(x_of_z, profile.zc())
    xg = np.linspace(0.0, tau, resample_count)
    zc = np.asarray(spline(xg))
    h = xg[1] - xg[0]

    f = 1.0 / np.sqrt(zc)
    d2 = np.empty_like(f)
    d2[1:-1] = (f[:-2] - 2.0 * f[1:-1] + f[2:]) / (h * h)
    d2[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (h * h)
    d2[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / (h * h)
    q = np.sqrt(zc) * d2

    slope = (-3.0 * zc[0] + 4.0 * zc[1] - zc[2]) / (2.0 * h)
    return BranchSpec(
        tau=tau,
        q=q,
        zc_at_node=float(zc[0]),
        zc_slope_at_node=float(slope),
        zc_samples=zc,
    )


def node_coupling(branches, zc0: float) -> float:
    """Central-node coupling H = -(1/2) sum_j Zc_j'(0) / zc0."""
    if not zc0 > 0.0:
        raise ParameterError("zc0 must be positive")
    return -0.5 * sum(b.zc_slope_at_node for b in branches) / zc0


def make_network(branches, zc0: float, coupling_h: float | None = None) -> StarNetwork:
    if coupling_h is None:
        coupling_h = node_coupling(branches, zc0)
    return StarNetwork(branches=tuple(branches), coupling_h=coupling_h, zc0=zc0)


def branch_log_derivative(branch: BranchSpec) -> np.ndarray:
    """Q(x) = (1/2) Zc^-1 dZc/dx on the branch grid (needs zc_samples)."""
    if branch.zc_samples is None:
        raise ParameterError("branch carries no Zc samples; built from tau/q only")
    xg = np.linspace(0.0, branch.tau, branch.zc_samples.size)
    dzc = np.gradient(branch.zc_samples, xg, edge_order=2)
    return 0.5 * dzc / branch.zc_samples


def riccati_check(branch: BranchSpec, omega: float, terminal_R: complex) -> complex:
    """Integrate dR/dx = e^{2iwx} Q R^2 - Q e^{-2iwx} from x=tau down to 0.

    Classical RK4 with n = max(2000, 20*w*tau) steps; serves as a
    cross-validation oracle for the fundamental-solution route.
    """
    if abs(terminal_R) > 1.0 + 1e-12:
        raise ParameterError("|terminal_R| must not exceed 1")
    Q = branch_log_derivative(branch)
    xg = np.linspace(0.0, branch.tau, Q.size)
    n = int(max(2000, np.ceil(20.0 * abs(omega) * branch.tau)))
    hstep = branch.tau / n
    # Q at all step endpoints and midpoints, finest first index at x = tau.
    pos = branch.tau - 0.5 * hstep * np.arange(2 * n + 1)
    Qs = np.interp(pos, xg, Q)

    def rhs(x, Qx, R):
        return np.exp(2j * omega * x) * Qx * R * R - Qx * np.exp(-2j * omega * x)

    R = complex(terminal_R)
    for i in range(n):
        x0 = branch.tau - i * hstep
        q0, qm, q1 = Qs[2 * i], Qs[2 * i + 1], Qs[2 * i + 2]
        k1 = rhs(x0, q0, R)
        k2 = rhs(x0 - 0.5 * hstep, qm, R - 0.5 * hstep * k1)
        k3 = rhs(x0 - 0.5 * hstep, qm, R - 0.5 * hstep * k2)
        k4 = rhs(x0 - hstep, q1, R - hstep * k3)
        R = R - (hstep / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if abs(1.0 + R) < 1e-12:
            raise SingularTrajectoryError(
                f"|1 + R| vanished at x ~ {x0 - hstep:.6g} (omega={omega})"
            )
    return R


def uniform_profile(length: float, inductance: float, capacitance: float,
                    samples: int = 64) -> LineProfile:
    """Convenience constructor for a uniform line."""
    z = np.linspace(0.0, length, samples)
    return LineProfile(
        z_grid=z,
        inductance=np.full(samples, float(inductance)),
        capacitance=np.full(samples, float(capacitance)),
    )


def uniform_branch(tau: float, zc: float = 50.0, samples: int = 16) -> BranchSpec:
    """Uniform branch given directly in traveling-time coordinates."""
    return BranchSpec(
        tau=float(tau),
        q=np.zeros(samples),
        zc_at_node=zc,
        zc_slope_at_node=0.0,
        zc_samples=np.full(samples, float(zc)),
    )
