"""Soft-fault identification: potential integrals and shape estimation.

Resonances of the network (frequencies with R = -1) carry the eigenvalues
of the underlying operator.  Their shifts against the free positions
(2i-1)pi/(2 tau_j) estimate each branch integral of q.  Full shapes come
from a constrained least-squares fit of one or two reflection traces over
a zero-mean basis per branch; the characteristic residual provides an
independent algebraic test of whether two potential sets are equivalent.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import (
    GeometryMismatchError,
    InsufficientDataError,
    NonConvergenceError,
    ParameterError,
)
from .forward import ReflectionTrace, branch_trace, sweep
from .line_model import BoundarySetting, BranchSpec, StarNetwork, make_network


@dataclass(frozen=True)
class ResonanceTable:
    """Resonances grouped by branch; entries are (order i, lambda_i)."""

    assigned: tuple    # ((branch_index, ((i, lam), ...)), ...)
    unassigned: tuple

    def branch_entries(self, j):
        for idx, entries in self.assigned:
            if idx == j:
                return entries
        return ()


@dataclass(frozen=True)
class IntegralEstimate:
    branch_index: int
    integral_hat: float
    shift_scale: float      # fitted a in delta ~ a / mu
    rms_residual: float
    count: int
    flags: tuple = ()


@dataclass(frozen=True)
class BasisSpec:
    """Zero-mean basis per branch.

    kind "full": sin(2 pi k x / tau), k = 1..m.
    kind "split": the first ceil(m/2) modes live on [0, tau/2), the rest
    on [tau/2, tau]; freezing the first block expresses the known-half
    constraint while keeping every mode zero-mean.
    """

    counts: tuple
    kind: str = "full"

    def __post_init__(self):
        if self.kind not in ("full", "split"):
            raise ParameterError(f"unknown basis kind {self.kind!r}")
        if any(int(c) < 1 for c in self.counts):
            raise ParameterError("basis counts must be positive")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def total(self):
        return sum(self.counts)


@dataclass(frozen=True)
class PotentialEstimate:
    coeffs: tuple           # per-branch coefficient arrays
    q_samples: tuple        # per-branch reconstructed q on the branch grid
    integral_hat: tuple     # per-branch trapezoid integral of the estimate
    misfit: float
    iterations: int
    flags: tuple = ()
    coeff_stderr: tuple = ()


# ---------------------------------------------------------------------------
# resonances
# ---------------------------------------------------------------------------

def detect_resonances(trace: ReflectionTrace, depth_tol: float = 1e-3):
    """Frequencies where |1 + R| dips below depth_tol.

    Candidate dips are local minima of |1+R|^2 whose interpolated vertex
    depth is small (the sample depth scales with the grid step and is the
    wrong thing to threshold).  Positions are then polished on the signed
    function Im[(1+R)/(1-R)], which crosses zero at each simple resonance,
    so the final location comes from a root find rather than the bottom
    of a flat quadratic valley.
    """
    om = trace.omegas
    R = trace.values
    g = np.abs(1.0 + R) ** 2
    if om.size < 3:
        return []
    with np.errstate(divide="ignore", invalid="ignore"):
        signed = np.imag((1.0 + R) / (1.0 - R))
    interior = np.arange(1, om.size - 1)
    is_min = (g[interior] <= g[interior - 1]) & (g[interior] <= g[interior + 1])
    found = []
    for i in interior[is_min]:
        x0, x1, x2 = om[i - 1], om[i], om[i + 1]
        y0, y1, y2 = g[i - 1], g[i], g[i + 1]
        denom = (y0 - 2.0 * y1 + y2)
        if denom > 0.0:
            # vertex of the parabola through the three samples
            lam = x1 + 0.5 * (x1 - x0) * (y0 - y2) / denom
            lam = min(max(lam, x0), x2)
            depth = max(y1 - (y0 - y2) ** 2 / (8.0 * denom), 0.0)
        else:
            lam = x1
            depth = y1
        # primary acceptance: the signed quotient v/u = Im[(1+R)/(1-R)]
        # crosses zero at each simple resonance with small values on both
        # sides (its pole crossings jump through huge values instead)
        crossing = None
        lo, hi = max(0, i - 2), min(om.size, i + 3)
        for k in sorted(range(lo, hi - 1), key=lambda k: abs(k - i)):
            sk, sk1 = signed[k], signed[k + 1]
            if (np.isfinite(sk) and np.isfinite(sk1) and sk * sk1 <= 0.0
                    and max(abs(sk), abs(sk1)) < 1e3):
                crossing = k
                break
        if crossing is not None:
            wlo, whi = max(0, i - 3), min(om.size, i + 4)
            window = signed[wlo:whi]
            if np.all(np.isfinite(window)):
                cs = CubicSpline(om[wlo:whi], window)
                lam = float(brentq(cs, om[crossing], om[crossing + 1],
                                   xtol=1e-12))
            else:
                lam = float(brentq(
                    lambda t: np.interp(t, om[lo:hi], signed[lo:hi]),
                    om[crossing], om[crossing + 1], xtol=1e-12))
        # fallback for tangential (double) dips without a sign change:
        # the quartic term of |1+R|^2 biases the vertex depth upward by
        # O(step^4), so also accept dips that are tiny against their own
        # shoulders -- a genuine resonance reaches (numerically) zero
        elif depth >= depth_tol * depth_tol and depth >= 1e-4 * (y0 + y2):
            continue
        found.append(float(lam))
    return found


def _free_order(lam, tau):
    """Closest order i with mu_i = (2i-1)pi/(2 tau) near lam."""
    i = int(round(lam * tau / np.pi + 0.5))
    return max(i, 1)


def assign_resonances(resonances, geometry) -> ResonanceTable:
    """Greedy nearest-branch assignment with a 2x runner-up margin."""
    taus = [tau for tau, _ in _groups_of(geometry)]
    if not taus:
        raise ParameterError("geometry has no branch groups")
    gap = np.pi / (4.0 * max(taus))
    per_branch = {j: [] for j in range(len(taus))}
    unassigned = []
    for lam in resonances:
        cands = []
        for j, tau in enumerate(taus):
            i = _free_order(lam, tau)
            mu = (2 * i - 1) * np.pi / (2.0 * tau)
            cands.append((abs(lam - mu), j, i))
        cands.sort()
        best, runner = cands[0], cands[1] if len(cands) > 1 else None
        if best[0] < gap and (runner is None or runner[0] >= 2.0 * best[0]):
            per_branch[best[1]].append((best[2], float(lam)))
        else:
            unassigned.append(float(lam))
    if resonances and len(unassigned) > 0.2 * len(resonances):
        raise GeometryMismatchError(
            f"{len(unassigned)} of {len(resonances)} resonances fit no branch; "
            "the assumed geometry is inconsistent with the trace"
        )
    assigned = []
    for j in sorted(per_branch):
        entries = sorted(set(per_branch[j]))
        assigned.append((j, tuple(entries)))
    return ResonanceTable(assigned=tuple(assigned), unassigned=tuple(unassigned))


def estimate_potential_integrals(table: ResonanceTable, geometry,
                                 min_count: int = 10,
                                 mismatch_tol: float = 0.5):
    """Per-branch integral of q from eigenvalue shifts.

    The shifts follow delta_i = a / mu_i with a = (integral of q)/(2 tau);
    the weighted least-squares solution with weights mu_i^2 reduces to
    a = mean(mu_i delta_i), which reproduces the constant-potential
    closed form sqrt(c + mu^2) - mu ~ c/(2 mu) exactly to leading order.
    """
    out = []
    for j, (tau, _n) in enumerate(_groups_of(geometry)):
        entries = table.branch_entries(j)
        if len(entries) < min_count:
            raise InsufficientDataError(
                f"branch {j} has {len(entries)} assigned resonances; "
                f"need at least {min_count}"
            )
        mu = np.array([(2 * i - 1) * np.pi / (2.0 * tau) for i, _ in entries])
        lam = np.array([l for _, l in entries])
        delta = lam - mu
        prod = mu * delta
        # merged or mis-resolved dips leave isolated wild shifts; drop
        # them before averaging (median absolute deviation fence)
        med = np.median(prod)
        mad = np.median(np.abs(prod - med))
        keep = np.abs(prod - med) <= max(5.0 * mad, 1e-12, 1e-9 * abs(med))
        if np.count_nonzero(keep) >= min_count:
            prod = prod[keep]
        a = float(np.mean(prod))
        rms = float(np.sqrt(np.mean((prod - a) ** 2)))
        flags = ()
        if rms > mismatch_tol * max(1.0, abs(a)):
            flags = ("model_mismatch",)
        out.append(IntegralEstimate(branch_index=j,
                                    integral_hat=2.0 * tau * a,
                                    shift_scale=a,
                                    rms_residual=rms,
                                    count=len(entries),
                                    flags=flags))
    return out


def _groups_of(geometry):
    """Accept a GeometryEstimate or a plain iterable of (tau, n)."""
    groups = getattr(geometry, "groups", geometry)
    return [(float(t), int(n)) for t, n in groups]


# ---------------------------------------------------------------------------
# characteristic residual
# ---------------------------------------------------------------------------

def characteristic_residual(branches, branches_tilde, omega_grid,
                            setting: BoundarySetting):
    """sum_j prod_{k!=j} phi_k(0) phit_k(0) * int (qt_j - q_j) phi_j phit_j dx.

    Vanishes identically iff the two potential sets produce the same
    reflection coefficient on the shared geometry.
    """
    if len(branches) != len(branches_tilde):
        raise ParameterError("potential sets differ in branch count")
    for b, bt in zip(branches, branches_tilde):
        if abs(b.tau - bt.tau) > 1e-12 * max(b.tau, 1.0):
            raise ParameterError("potential sets live on different geometries")
        if b.q.shape != bt.q.shape:
            raise ParameterError("branch sample grids differ between the sets")
    om = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    nb = len(branches)
    node_vals = np.empty((nb, om.size))
    node_vals_t = np.empty((nb, om.size))
    inner = np.empty((nb, om.size))
    for j, (b, bt) in enumerate(zip(branches, branches_tilde)):
        vals, v0, _ = branch_trace(b, om, setting)
        vals_t, v0t, _ = branch_trace(bt, om, setting)
        node_vals[j] = v0
        node_vals_t[j] = v0t
        x = np.linspace(0.0, b.tau, b.q.size)
        dq = bt.q - b.q
        inner[j] = np.trapezoid(dq[None, :] * vals * vals_t, x, axis=1)
    total = np.zeros(om.size)
    for j in range(nb):
        outer = np.ones(om.size)
        for k in range(nb):
            if k != j:
                outer *= node_vals[k] * node_vals_t[k]
        total += outer * inner[j]
    return total


# ---------------------------------------------------------------------------
# least-squares potential fit
# ---------------------------------------------------------------------------

def _basis_matrix(tau, n_nodes, count, kind):
    x = np.linspace(0.0, tau, n_nodes)
    B = np.zeros((n_nodes, count))
    if kind == "full":
        for k in range(count):
            B[:, k] = np.sin(2.0 * np.pi * (k + 1) * x / tau)
        return B
    # split: first block on [0, tau/2), second on [tau/2, tau]
    first = (count + 1) // 2
    half = tau / 2.0
    lo = x < half
    hi = ~lo
    for k in range(first):
        B[lo, k] = np.sin(2.0 * np.pi * (k + 1) * x[lo] / half)
    for k in range(first, count):
        B[hi, k] = np.sin(2.0 * np.pi * (k - first + 1) * (x[hi] - half) / half)
    return B


def _model_network(taus, mults, bases, coeffs_split, zc0, coupling_h):
    branches = []
    for tau, n, B, c in zip(taus, mults, bases, coeffs_split):
        q = B @ c
        spec = BranchSpec(tau=tau, q=q, zc_at_node=zc0, zc_slope_at_node=0.0)
        branches.extend([spec] * n)
    return make_network(branches, zc0, coupling_h=coupling_h)


def fit_potentials(trace_n: ReflectionTrace,
                   trace_d: ReflectionTrace | None,
                   geometry,
                   basis: BasisSpec,
                   freeze_mask=None,
                   init_coeffs=None,
                   n_nodes: int = 65,
                   zc0: float = 50.0,
                   coupling_h: float = 0.0,
                   max_iter: int = 200,
                   step_tol: float = 1e-10,
                   stagnation_misfit: float = 1e-4,
                   fd_step: float = 1e-6) -> PotentialEstimate:
    """Damped Gauss-Newton fit of per-branch potentials to the traces.

    With both a Neumann and a Dirichlet trace the zero-mean potentials are
    locally identified; with the Neumann trace alone the caller must
    constrain half of each branch through freeze_mask on a split basis.
    """
    groups = _groups_of(geometry)
    taus = [t for t, _ in groups]
    mults = [n for _, n in groups]
    if len(basis.counts) != len(taus):
        raise ParameterError("basis counts do not match the branch groups")
    ncoef = basis.total
    if freeze_mask is None:
        freeze_mask = np.zeros(ncoef, dtype=bool)
    else:
        freeze_mask = np.asarray(freeze_mask, dtype=bool)
        if freeze_mask.shape != (ncoef,):
            raise ParameterError(
                f"freeze_mask length {freeze_mask.size} does not match "
                f"{ncoef} basis coefficients"
            )
    traces = [t for t in (trace_n, trace_d) if t is not None]
    if not traces:
        raise ParameterError("at least one trace is required")
    bases = [_basis_matrix(tau, n_nodes, c, basis.kind)
             for tau, c in zip(taus, basis.counts)]
    splits = np.cumsum(basis.counts)[:-1]
    free = ~freeze_mask
    n_free = int(np.count_nonzero(free))
    if n_free == 0:
        raise ParameterError("freeze_mask leaves no coefficient to fit")

    def residual(c):
        net = _model_network(taus, mults, bases, np.split(c, splits),
                             zc0, coupling_h)
        parts = []
        for tr in traces:
            model = sweep(net, tr.omegas, tr.setting).values
            diff = model - tr.values
            parts.append(diff.real)
            parts.append(diff.imag)
        return np.concatenate(parts)

    if init_coeffs is None:
        coeffs = np.zeros(ncoef)
    else:
        coeffs = np.asarray(init_coeffs, dtype=float).copy()
        if coeffs.shape != (ncoef,):
            raise ParameterError(
                f"init_coeffs length {coeffs.size} does not match "
                f"{ncoef} basis coefficients"
            )
    r = residual(coeffs)
    misfit = float(r @ r)
    iterations = 0
    flags = []
    stderr = np.full(ncoef, np.nan)
    converged = False
    while iterations < max_iter:
        iterations += 1
        J = np.empty((r.size, n_free))
        for col, idx in enumerate(np.flatnonzero(free)):
            bumped = coeffs.copy()
            bumped[idx] += fd_step
            J[:, col] = (residual(bumped) - r) / fd_step
        step, _res, rank, _sv = np.linalg.lstsq(J, -r, rcond=None)
        if rank < n_free:
            # rank-deficient Jacobian: fall back to a coordinate search
            if "rank_deficient_jacobian" not in flags:
                flags.append("rank_deficient_jacobian")
            step = _coordinate_step(residual, coeffs, free, misfit, fd_step)
        # damped acceptance: halve until the objective decreases
        scale = 1.0
        accepted = False
        for _ in range(12):
            cand = coeffs.copy()
            cand[free] += scale * step
            r_cand = residual(cand)
            m_cand = float(r_cand @ r_cand)
            if m_cand < misfit:
                coeffs, r, misfit = cand, r_cand, m_cand
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
        if np.linalg.norm(scale * step) < step_tol:
            converged = True
            break
    else:
        flags.append("iteration_limit")
    if misfit > stagnation_misfit and not converged:
        best = _package(coeffs, taus, bases, splits, misfit, iterations,
                        tuple(flags) + ("stagnated",), stderr)
        raise NonConvergenceError(
            f"misfit stalled at {misfit:.3e} above {stagnation_misfit:.1e}",
            best_estimate=best,
        )
    # Gauss-Newton covariance diagnostics at the solution
    try:
        J = np.empty((r.size, n_free))
        for col, idx in enumerate(np.flatnonzero(free)):
            bumped = coeffs.copy()
            bumped[idx] += fd_step
            J[:, col] = (residual(bumped) - r) / fd_step
        dof = max(r.size - n_free, 1)
        cov = np.linalg.pinv(J.T @ J) * (misfit / dof)
        stderr[free] = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        flags.append("covariance_unavailable")
    q_max = max(
        (float(np.max(np.abs(B @ c))) for B, c in
         zip(bases, np.split(coeffs, splits))),
        default=0.0,
    )
    if q_max > 0.2:
        flags.append("estimate_outside_smallness_regime")
    return _package(coeffs, taus, bases, splits, misfit, iterations,
                    tuple(flags), stderr)


def _coordinate_step(residual, coeffs, free, misfit, h):
    """One pass of coordinate descent used when the Jacobian degenerates."""
    step = np.zeros(int(np.count_nonzero(free)))
    for col, idx in enumerate(np.flatnonzero(free)):
        for delta in (h * 100.0, -h * 100.0):
            cand = coeffs.copy()
            cand[idx] += delta
            rr = residual(cand)
            if float(rr @ rr) < misfit:
                step[col] = delta
                break
    return step


def _package(coeffs, taus, bases, splits, misfit, iterations, flags, stderr):
    per_branch = np.split(coeffs, splits)
    err_branch = np.split(stderr, splits)
    qs = []
    integrals = []
    for tau, B, c in zip(taus, bases, per_branch):
        q = B @ c
        qs.append(q)
        integrals.append(float(np.trapezoid(q, np.linspace(0.0, tau, q.size))))
    return PotentialEstimate(
        coeffs=tuple(np.asarray(c) for c in per_branch),
        q_samples=tuple(qs),
        integral_hat=tuple(integrals),
        misfit=misfit,
        iterations=iterations,
        flags=tuple(flags),
        coeff_stderr=tuple(np.asarray(e) for e in err_branch),
    )
