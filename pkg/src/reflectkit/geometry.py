"""Hard-fault detection: branch count, multiplicities and traveling times.

For a homogeneous network the trace determines f(w) = sum_j n_j tan(w tau_j);
each branch group contributes a train of poles at (2k-1)pi/(2 tau_j) with
residue -n_j/tau_j.  Peeling locates the train through the smallest pole of
the residual signal, estimates tau from the train spacing (equivalently
tau = pi/(2 w*) when the window contains the fundamental pole), reads the
multiplicity off the Richardson-extrapolated residue, subtracts the group
and repeats.  With a nonzero potential the same signal is exact up to an
O(1/w) remainder, absorbed into the stopping tolerance on high-frequency
windows.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, least_squares

from .errors import (
    AmbiguousMultiplicityError,
    ParameterError,
    ReflectKitError,
    TraceTooCoarseError,
    WindowTooSmallError,
)
from .forward import ReflectionTrace


@dataclass(frozen=True)
class TanSumSamples:
    omegas: np.ndarray
    f_values: np.ndarray
    mask: np.ndarray  # True where the sample is excluded (near-pole / resonance)


@dataclass(frozen=True)
class GeometryEstimate:
    groups: tuple           # ((tau_hat, multiplicity), ...) decreasing tau
    residual_sup: float
    window: tuple
    flags: tuple = ()


def tan_sum_from_trace(trace: ReflectionTrace, H: float,
                       mask_tol: float = 1e-6,
                       imag_tol: float = 1e-6) -> TanSumSamples:
    """f(w) = (H - i w (1-R)/(1+R)) / w with near-resonance samples masked."""
    mask = np.abs(1.0 + trace.values) < mask_tol
    if np.count_nonzero(mask) > 0.5 * mask.size:
        raise TraceTooCoarseError(
            "more than half of the samples sit on resonances; refine the grid"
        )
    f = np.zeros_like(trace.omegas)
    ok = ~mask
    om = trace.omegas[ok]
    R = trace.values[ok]
    fc = (H - 1j * om * (1.0 - R) / (1.0 + R)) / om
    # unitary input gives a real f; isolated samples violating that are
    # rounding blow-ups next to a resonance and get masked, a widespread
    # violation means the trace is not from a lossless network
    bad = np.abs(fc.imag) >= imag_tol
    if np.count_nonzero(bad) > 0.1 * fc.size:
        worst = float(np.max(np.abs(fc.imag)))
        raise ReflectKitError(
            f"tan-sum imaginary residue {worst:.3e} exceeds {imag_tol:.1e} "
            "on more than 10% of the samples"
        )
    f[ok] = fc.real
    mask = mask.copy()
    mask[np.flatnonzero(ok)[bad]] = True
    return TanSumSamples(omegas=trace.omegas, f_values=f, mask=mask)


def _local_inverse_poly(om, f, ok_idx, pos, center, span=3):
    """Cubic fit of 1/f from the nearest unmasked samples around a bracket.

    1/f is smooth through a pole of f, so the fit supports both the
    bisection refinement and near-pole evaluation of f itself.
    """
    lo = max(0, pos - span + 1)
    hi = min(len(ok_idx), pos + span + 1)
    sel = ok_idx[lo:hi]
    x = om[sel]
    g = 1.0 / f[sel]
    deg = min(3, len(x) - 1)
    return np.polyfit(x - center, g, deg), center


def _detect_poles(om, f, mask):
    """Refined pole positions and local inverse interpolants.

    A pole is a sign change between consecutive unmasked samples with both
    magnitudes well above the window median (zero crossings of f stay small
    at any reasonable grid density, poles do not).  Masked samples may sit
    inside the bracket: the grid can land on a resonance exactly.
    """
    ok_idx = np.flatnonzero(~mask)
    if ok_idx.size < 4:
        return []
    fa = f[ok_idx[:-1]]
    fb = f[ok_idx[1:]]
    med = np.median(np.abs(f[ok_idx]))
    thresh = max(10.0, 30.0 * med)
    floor = max(5.0, 5.0 * med)
    # a pole of sum(n tan) always jumps +inf -> -inf; steep zero
    # crossings between poles go the other way
    cand = ((ok_idx[1:] - ok_idx[:-1]) <= 4)
    cand &= (fa > 0.0) & (fb < 0.0)
    cand &= np.maximum(fa, -fb) >= thresh
    cand &= np.minimum(fa, -fb) >= floor
    poles = []
    for p in np.flatnonzero(cand):
        ia, ib = ok_idx[p], ok_idx[p + 1]
        center = 0.5 * (om[ia] + om[ib])
        coeffs, x0 = _local_inverse_poly(om, f, ok_idx, p, center)

        def g(x):
            return np.polyval(coeffs, x - x0)

        try:
            root = brentq(g, om[ia], om[ib], xtol=1e-8)
        except ValueError:
            root = center
        poles.append((float(root), coeffs, x0))
    return poles


def _residue(pole, coeffs, x0, step):
    """lim (w - w*) f(w) by Richardson extrapolation of symmetric samples."""

    def f_loc(x):
        return 1.0 / np.polyval(coeffs, x - x0)

    delta = min(1e-3 * pole, 0.6 * step)

    def m(d):
        return 0.5 * d * (f_loc(pole + d) - f_loc(pole - d))

    m1, m2, m4 = m(delta), m(2.0 * delta), m(4.0 * delta)
    r1 = (4.0 * m1 - m2) / 3.0
    r2 = (4.0 * m2 - m4) / 3.0
    return (16.0 * r1 - r2) / 15.0


def _pole_train(poles, om_max, step):
    """Arithmetic progression of poles through the smallest one.

    Returns (members, spacing) where spacing is None when the train cannot
    be resolved (single pole in the window: the fundamental-pole rule
    tau = pi/(2 w*) applies instead).

    Candidate spacings are screened by the half-integer phase of p0 and a
    coverage count, then validated by residue consistency: members of a
    genuine train all carry residue -n/tau for one positive integer n,
    while an accidental progression through poles of different trains does
    not.  Collisions between trains displace or swallow detected poles, so
    coverage alone cannot be trusted at dense windows.
    """
    positions = np.array([p[0] for p in poles])
    p0 = positions[0]
    if len(positions) == 1:
        return [poles[0]], None, None
    # candidate spacings: gaps from p0 to later poles, plus their low
    # submultiples (the train's immediate neighbour can be lost to a
    # collision with another train, leaving only 2d, 3d... visible)
    cands = []
    for i in range(1, min(len(positions), 21)):
        gap = positions[i] - p0
        if gap <= 0.0:
            continue
        for m in (1, 2, 3):
            cands.append(gap / m)
    cands.sort()
    for d in cands:
        ratio = p0 / d
        # any member of a tan train sits at a half-integer multiple of d
        if abs(ratio - np.floor(ratio) - 0.5) > 0.05:
            continue
        n_expected = int(np.floor((om_max - p0) / d)) + 1
        members = []
        hits = 0
        for mth in range(n_expected):
            target = p0 + mth * d
            k = int(np.argmin(np.abs(positions - target)))
            if abs(positions[k] - target) < 0.05 * d:
                hits += 1
                members.append((mth, poles[k]))
        if hits < max(2, int(np.ceil(0.6 * n_expected))):
            continue
        ms = np.array([mth for mth, _ in members], dtype=float)
        ps = np.array([p[0] for _, p in members])
        # Theil-Sen slope: single members displaced by collisions with
        # other trains cannot drag the spacing the way a least-squares
        # line would let them
        if len(members) >= 3:
            slopes = (ps[1:] - ps[:-1]) / (ms[1:] - ms[:-1])
            d_fit = float(np.median(slopes))
        else:
            d_fit = float(np.polyfit(ms, ps, 1)[0])
        tau = np.pi / d_fit
        ests = np.array([-tau * _residue(p, c, x, step)
                         for _, (p, c, x) in members[:7]])
        med = float(np.median(ests))
        n_med = round(med)
        if n_med < 1 or abs(med - n_med) > 0.25:
            continue
        close = np.count_nonzero(np.abs(ests - med) <= 0.2 * max(1.0, med))
        if 2 * close < len(ests):
            continue
        return [p for _, p in members], d_fit, med
    return [poles[0]], None, None


def _refine_taus(samples: TanSumSamples, groups, tan_mask_bound):
    """Joint least-squares polish of the peeled lengths against the raw signal."""
    om = samples.omegas
    taus0 = np.array([tau for tau, _ in groups])
    ns = np.array([n for _, n in groups], dtype=float)
    keep = ~samples.mask
    keep &= np.abs(samples.f_values) <= tan_mask_bound * (ns.sum() + 1.0)
    for tau in taus0:
        keep &= np.abs(np.tan(om * tau)) <= tan_mask_bound
    if np.count_nonzero(keep) < 2 * len(groups):
        return groups
    omk = om[keep]
    fk = samples.f_values[keep]

    def resid(taus):
        return np.tan(np.outer(omk, taus)) @ ns - fk

    sol = least_squares(resid, taus0, method="lm", xtol=1e-14, ftol=1e-14)
    taus = sol.x
    # reject a polish that wandered off the initial estimates
    if np.any(np.abs(taus - taus0) > 0.05 * taus0):
        return groups
    return [(float(t), int(n)) for t, n in zip(taus, ns)]


def peel_geometry(samples: TanSumSamples, tolerance: float,
                  max_groups: int = 16,
                  tan_mask_bound: float = 10.0) -> GeometryEstimate:
    """Iteratively remove pole trains from the tan-sum signal."""
    if not tolerance > 0.0:
        raise ParameterError("tolerance must be positive")
    om = samples.omegas
    f = samples.f_values.copy()
    mask = samples.mask.copy()
    step = float(np.median(np.diff(om))) if om.size > 1 else 1.0
    groups = []
    flags = []

    iterations = 0
    while True:
        iterations += 1
        if iterations > max_groups + 48:
            raise ReflectKitError(
                f"peeling did not settle after {iterations - 1} iterations"
            )
        if len(groups) >= max_groups:
            raise ReflectKitError(
                f"more than {max_groups} groups peeled; giving up"
            )
        poles = _detect_poles(om, f, mask)
        if not poles:
            break
        members, spacing, n_float = _pole_train(poles, om[-1], step)
        p0, coeffs, x0 = members[0]
        if spacing is None:
            # single isolated pole: fundamental rule.  Both the position
            # and the residue of a lone pole can be spoiled by a collision
            # with a neighbouring train, so an implausible multiplicity
            # here masks the pole and retries instead of giving up.
            tau_hat = np.pi / (2.0 * p0)
            n_float = -tau_hat * _residue(p0, coeffs, x0, step)
            n_hat = int(round(n_float))
            if n_hat < 1 or abs(n_float - n_hat) > 0.25:
                mask |= np.abs(om - p0) <= 3.0 * step
                if "ambiguous_pole_skipped" not in flags:
                    flags.append("ambiguous_pole_skipped")
                continue
        else:
            tau_hat = np.pi / spacing
            n_hat = int(round(n_float))
            if n_hat < 1 or abs(n_float - n_hat) > 0.25:
                raise AmbiguousMultiplicityError(
                    f"multiplicity estimate {n_float:.3f} at pole {p0:.6g} "
                    "is not close to a positive integer"
                )
        if abs(n_float - n_hat) > 0.1:
            flags.append("multiplicity_uncertain")
        if any(abs(tau_hat - t) < 0.01 * t for t, _ in groups):
            # equal lengths share one pole train and come out as a single
            # group with summed multiplicity, so a near-copy of an already
            # peeled tau is leftover of an imperfect subtraction
            mask |= np.abs(np.tan(om * tau_hat)) > tan_mask_bound
            if "remnant_train_masked" not in flags:
                flags.append("remnant_train_masked")
            continue
        tan_vals = np.tan(om * tau_hat)
        f -= n_hat * tan_vals
        mask |= np.abs(tan_vals) > tan_mask_bound
        groups.append((float(tau_hat), n_hat))

    if groups:
        groups = _refine_taus(samples, groups, tan_mask_bound)
        # the residual check runs on a tighter band: near the peel mask
        # boundary even the exact lengths leave sec^2-amplified leftovers
        # (the poles themselves drift by O(1/w) when q != 0)
        band = min(tan_mask_bound, 2.0)
        f = samples.f_values.copy()
        mask = samples.mask.copy()
        n_total = sum(n for _, n in groups)
        mask |= np.abs(samples.f_values) > band * (n_total + 1.0)
        for tau, n in groups:
            tan_vals = np.tan(om * tau)
            f -= n * tan_vals
            mask |= np.abs(tan_vals) > band
    ok = ~mask
    residual_sup = float(np.max(np.abs(f[ok]))) if np.any(ok) else 0.0
    if residual_sup >= tolerance:
        raise WindowTooSmallError(
            f"residual sup {residual_sup:.3e} above tolerance {tolerance:.3e} "
            "after refinement"
        )
    # merge groups unresolvable at the grid (tie-break decision)
    groups.sort(key=lambda g: -g[0])
    merged = []
    for tau, n in groups:
        if merged and abs(merged[-1][0] - tau) < 1e-3 * tau:
            merged[-1] = (merged[-1][0], merged[-1][1] + n)
            if "merged_groups" not in flags:
                flags.append("merged_groups")
        else:
            merged.append((tau, n))
    window = (float(om[0]), float(om[-1])) if om.size else (0.0, 0.0)
    return GeometryEstimate(groups=tuple(merged), residual_sup=residual_sup,
                            window=window, flags=tuple(flags))


def b1_flags(taus, integer_gap: float = 0.05):
    """Length-ratio diagnostics: flag ratios within `integer_gap` of an integer."""
    flags = []
    for i in range(len(taus)):
        for j in range(len(taus)):
            if i == j:
                continue
            r = taus[i] / taus[j]
            if r >= 1.0 - integer_gap and abs(r - round(r)) <= integer_gap:
                flags.append("b1_violated")
                return tuple(flags)
    return tuple(flags)


def identify_geometry(trace: ReflectionTrace, H: float, window,
                      tolerance: float = 1e-3,
                      remainder_coeff: float = 0.0,
                      mask_tol: float = 1e-6,
                      imag_tol: float = 1e-6) -> GeometryEstimate:
    """Windowed geometry recovery from one reflection trace.

    remainder_coeff = c loosens the stopping rule to tolerance + c/w_min on
    high-frequency windows, absorbing the O(1/w) potential remainder.
    """
    w_min, w_max = window
    if not (0.0 < w_min < w_max):
        raise ParameterError("window must satisfy 0 < w_min < w_max")
    sel = (trace.omegas > w_min) & (trace.omegas <= w_max)
    if np.count_nonzero(sel) < 16:
        raise ParameterError("window contains too few trace samples")
    sub = ReflectionTrace(omegas=trace.omegas[sel], values=trace.values[sel],
                          setting=trace.setting, h_coupling=trace.h_coupling)
    samples = tan_sum_from_trace(sub, H, mask_tol=mask_tol, imag_tol=imag_tol)
    tol_eff = tolerance + remainder_coeff / w_min
    est = peel_geometry(samples, tol_eff)
    taus = [tau for tau, _ in est.groups]
    flags = est.flags + b1_flags(taus)
    return GeometryEstimate(groups=est.groups, residual_sup=est.residual_sup,
                            window=(float(w_min), float(w_max)), flags=flags)
