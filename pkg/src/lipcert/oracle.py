"""Independent ground-truth machinery for cross-checking the certified bounds.

Everything here deliberately avoids the bound-propagation code paths: sampled
gradients give lower bounds, activation-pattern enumeration gives an upper
bound on tiny networks, finite differences validate pointwise Jacobians, and
a plain-loop transcription of the recursive interval scheme serves as the
equivalence reference for the interval mode.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .forward_bounds import BoxDomain, preactivation_bounds
from .model import Network, forward, jacobian_at

MAX_ENUMERATED_UNSTABLE = 20


class UnstableCountError(ValueError):
    """Too many unstable neurons to enumerate activation patterns."""


class KinkProximityError(ValueError):
    """A pre-activation is too close to zero for finite differencing."""


@dataclass(frozen=True)
class SampleReport:
    lower_bound: float
    argmax_x: np.ndarray
    samples: int
    seed: int


@dataclass(frozen=True)
class PatternEnumReport:
    upper_bound: float
    patterns_total: int
    patterns_feasible: int


def sample_lower_bound(
    net: Network, box: BoxDomain, n_samples: int = 1000, seed: int = 0
) -> SampleReport:
    """Max sampled Jacobian norm: a valid lower bound on the local constant.

    Evaluates ||J(x)||_inf at uniform points in the box, at the center, and
    at every corner when the dimension is at most 12 (corners often attain
    the max for piecewise-linear maps).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    points = [box.center]
    points.extend(rng.uniform(box.lo, box.hi, size=(n_samples, box.dim)))
    if box.dim <= 12:
        for corner in itertools.product(*zip(box.lo, box.hi)):
            points.append(np.array(corner))
    best = -np.inf
    best_x = points[0]
    for x in points:
        norm = float(np.max(np.sum(np.abs(jacobian_at(net, x)), axis=1)))
        if norm > best:
            best, best_x = norm, x
    return SampleReport(best, np.asarray(best_x), len(points), seed)


def enumerate_pattern_upper_bound(net: Network, box: BoxDomain) -> PatternEnumReport:
    """Exact max Jacobian norm over all interval-feasible activation patterns.

    Neurons stable over the box keep their fixed gradient; every 0/1
    assignment to the unstable ones is enumerated, so the result
    over-approximates the exact local constant (no path feasibility beyond
    interval stability) and upper-bounds any complete branch-and-bound run.
    """
    intervals = preactivation_bounds(net, box)
    base = []
    free: list[tuple[int, int]] = []
    for k, iv in enumerate(intervals):
        grad = np.where(iv.l > 0, 1.0, 0.0)
        base.append(grad)
        for j in np.flatnonzero((iv.l <= 0) & (iv.u >= 0)):
            free.append((k, int(j)))
    if len(free) > MAX_ENUMERATED_UNSTABLE:
        raise UnstableCountError(
            f"{len(free)} unstable neurons exceed the enumeration budget "
            f"of {MAX_ENUMERATED_UNSTABLE}"
        )
    total = 2 ** len(free)
    best = 0.0
    for bits in itertools.product((0.0, 1.0), repeat=len(free)):
        grads = [g.copy() for g in base]
        for (k, j), bit in zip(free, bits):
            grads[k][j] = bit
        jac = net.layers[0].weight
        for k in range(1, net.n_layers):
            jac = net.layers[k].weight @ (grads[k - 1][:, None] * jac)
        best = max(best, float(np.max(np.sum(np.abs(jac), axis=1))))
    return PatternEnumReport(best, total, total)


def finite_difference_check(net: Network, x: np.ndarray, step: float = 1e-6) -> float:
    """Max entrywise gap between central differences and the exact Jacobian.

    Refuses points where any pre-activation is within 10 * step of zero,
    since the Jacobian is not locally constant there.
    """
    x = np.asarray(x, dtype=np.float64)
    _, preacts = forward(net, x)
    for k, z in enumerate(preacts):
        j = int(np.argmin(np.abs(z)))
        if abs(z[j]) <= 10.0 * step:
            raise KinkProximityError(
                f"neuron ({k}, {j}) has pre-activation {z[j]:.3e}, "
                f"within 10*step of the kink"
            )
    jac = jacobian_at(net, x)
    fd = np.zeros_like(jac)
    for j in range(net.input_dim):
        e = np.zeros(net.input_dim)
        e[j] = step
        hi, _ = forward(net, x + e)
        lo, _ = forward(net, x - e)
        fd[:, j] = (hi - lo) / (2.0 * step)
    return float(np.max(np.abs(fd - jac)))


def recurjac_reference(net: Network, box: BoxDomain) -> float:
    """Plain-loop transcription of the recursive interval Jacobian scheme.

    Computes entrywise Jacobian bounds layer by layer: sign-fixed entries
    keep symbolic coefficients merged into the next weight matrix, entries
    straddling zero collapse to interval constants scaled by the gradient
    upper bound, and the row norm is the sum of entrywise max magnitudes.
    Used as the independence check for the "interval" bound mode.
    """
    intervals = preactivation_bounds(net, box)
    n = net.n_layers
    g_lo = []
    g_hi = []
    for iv in intervals:
        g_lo.append([1.0 if l > 0 else 0.0 for l in iv.l])
        g_hi.append([0.0 if u < 0 else 1.0 for u in iv.u])

    best = 0.0
    for row in range(net.output_dim):
        w_last = net.layers[-1].weight[row]
        entry_lo: list[list[float]] = [None] * n  # type: ignore[list-item]
        entry_hi: list[list[float]] = [None] * n  # type: ignore[list-item]
        entry_lo[n - 1] = [float(v) for v in w_last]
        entry_hi[n - 1] = [float(v) for v in w_last]

        def bound_form(k: int, v: list[float], upper: bool) -> float:
            if k == n - 1:
                return sum(float(w_last[m]) * v[m] for m in range(len(v)))
            weight = net.layers[k].weight
            folded = [
                sum(float(weight[j, m]) * v[m] for m in range(len(v)))
                for j in range(weight.shape[0])
            ]
            carried = [0.0] * len(folded)
            bias = 0.0
            for j, c in enumerate(folded):
                lo1, hi1 = entry_lo[k + 1][j], entry_hi[k + 1][j]
                gl, gu = g_lo[k][j], g_hi[k][j]
                if lo1 >= 0.0:
                    hi_slope, lo_slope = gu, gl
                elif hi1 <= 0.0:
                    hi_slope, lo_slope = gl, gu
                else:
                    lo_const, hi_const = lo1 * gu, hi1 * gu
                    if upper:
                        bias += c * hi_const if c >= 0 else c * lo_const
                    else:
                        bias += c * lo_const if c >= 0 else c * hi_const
                    continue
                if upper:
                    carried[j] = c * hi_slope if c >= 0 else c * lo_slope
                else:
                    carried[j] = c * lo_slope if c >= 0 else c * hi_slope
            return bias + bound_form(k + 1, carried, upper)

        for k in range(n - 2, -1, -1):
            width = net.layers[k].in_dim
            lo_k = []
            hi_k = []
            for m in range(width):
                unit = [0.0] * width
                unit[m] = 1.0
                lo_k.append(bound_form(k, unit, upper=False))
                hi_k.append(bound_form(k, unit, upper=True))
            entry_lo[k] = lo_k
            entry_hi[k] = hi_k

        norm = sum(
            max(abs(entry_lo[0][m]), abs(entry_hi[0][m]))
            for m in range(net.input_dim)
        )
        best = max(best, norm)
    return best
