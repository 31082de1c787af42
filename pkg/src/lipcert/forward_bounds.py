"""Pre-activation interval bounds over a box input domain.

Bounds each hidden layer's pre-activation vector by propagating linear forms
backward to the input and concretizing them over the box. ReLU layers along
the way are replaced by per-neuron linear envelopes built from the intervals
of earlier layers, so layers are bounded front to back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AffineLayer, Network


class InfeasibleDomainError(Exception):
    """A sign constraint leaves an empty pre-activation interval."""


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned input region lo <= x <= hi."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"lo/hi must be 1-d with equal shape, got {lo.shape}, {hi.shape}")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box has lo > hi in some dimension")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def ball(cls, center: np.ndarray, eps: float) -> "BoxDomain":
        """The l-inf ball of radius eps around center."""
        if eps < 0:
            raise ValueError("eps must be non-negative")
        center = np.asarray(center, dtype=np.float64)
        return cls(center - eps, center + eps)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


@dataclass
class LinearForm:
    """Rows of linear functions coeff @ y + bias_acc of some layer output y."""

    coeff: np.ndarray  # (rows, current layer width)
    bias_acc: np.ndarray  # (rows,)


@dataclass(frozen=True)
class LayerIntervals:
    """Entrywise bounds l <= z <= u on one layer's pre-activation."""

    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        if np.any(self.l > self.u):
            raise ValueError("intervals have l > u")

    @property
    def width(self) -> int:
        return self.l.shape[0]


@dataclass(frozen=True)
class ReluRelaxation:
    """Per-neuron lines sandwiching relu(z) on [l, u]:

    lower_slope * z + lower_intercept <= relu(z) <= upper_slope * z + upper_intercept
    """

    lower_slope: np.ndarray
    lower_intercept: np.ndarray
    upper_slope: np.ndarray
    upper_intercept: np.ndarray


def relu_relaxation(
    l: np.ndarray, u: np.ndarray, lower_slope_policy: str = "adaptive"
) -> ReluRelaxation:
    """Linear envelopes of ReLU on [l, u] per neuron.

    Stable neurons get exact lines (identity or zero). Unstable ones get the
    chord from (l, 0) to (u, u) above, and below a zero-intercept line whose
    slope follows the policy: "adaptive" picks 1 when u >= -l else 0,
    "zero"/"one" force that slope. Point intervals (l == u) collapse both
    lines to the constant relu(l).
    """
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if np.any(l > u):
        raise ValueError("relu_relaxation needs l <= u")
    if lower_slope_policy not in ("adaptive", "zero", "one"):
        raise ValueError(f"unknown lower_slope_policy {lower_slope_policy!r}")

    n = l.shape[0]
    ls = np.zeros(n)
    li = np.zeros(n)
    us = np.zeros(n)
    ui = np.zeros(n)

    point = l == u
    active = (l >= 0) & ~point
    inactive = (u <= 0) & ~point
    unstable = ~(point | active | inactive)

    ls[active] = 1.0
    us[active] = 1.0
    # inactive rows stay all-zero

    ui[point] = np.maximum(l[point], 0.0)
    li[point] = np.maximum(l[point], 0.0)

    lu, uu = l[unstable], u[unstable]
    us[unstable] = uu / (uu - lu)
    ui[unstable] = -lu * uu / (uu - lu)
    if lower_slope_policy == "adaptive":
        ls[unstable] = (uu >= -lu).astype(np.float64)
    elif lower_slope_policy == "one":
        ls[unstable] = 1.0
    return ReluRelaxation(ls, li, us, ui)


def relaxation_matrices(
    layer: AffineLayer, relax: ReluRelaxation
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Combine an affine layer with its ReLU envelope into linear maps of the
    layer input: (P_lo, q_lo, P_hi, q_hi) with P_lo x + q_lo <= relu(Wx + b) <= P_hi x + q_hi."""
    p_lo = relax.lower_slope[:, None] * layer.weight
    q_lo = relax.lower_slope * layer.bias + relax.lower_intercept
    p_hi = relax.upper_slope[:, None] * layer.weight
    q_hi = relax.upper_slope * layer.bias + relax.upper_intercept
    return p_lo, q_lo, p_hi, q_hi


def backward_substitute(
    form: LinearForm,
    p_lo: np.ndarray,
    q_lo: np.ndarray,
    p_hi: np.ndarray,
    q_hi: np.ndarray,
    direction: str = "upper",
) -> LinearForm:
    """Substitute a relaxed layer into a linear form, one step backward.

    For the upper direction the positive part of the coefficients takes the
    upper envelope and the negative part the lower one; the lower direction
    swaps the two.
    """
    if direction == "lower":
        p_lo, q_lo, p_hi, q_hi = p_hi, q_hi, p_lo, q_lo
    elif direction != "upper":
        raise ValueError(f"direction must be 'upper' or 'lower', got {direction!r}")
    a_pos = np.clip(form.coeff, 0.0, None)
    a_neg = np.clip(form.coeff, None, 0.0)
    coeff = a_pos @ p_hi + a_neg @ p_lo
    bias = form.bias_acc + a_pos @ q_hi + a_neg @ q_lo
    return LinearForm(coeff, bias)


def concretize(form: LinearForm, box: BoxDomain, direction: str = "upper") -> np.ndarray:
    """Evaluate the extreme value of each row of the form over the box."""
    if form.coeff.shape[1] != box.dim:
        raise ValueError(
            f"form has {form.coeff.shape[1]} columns, box has dimension {box.dim}"
        )
    a_pos = np.clip(form.coeff, 0.0, None)
    a_neg = np.clip(form.coeff, None, 0.0)
    if direction == "upper":
        return a_pos @ box.hi + a_neg @ box.lo + form.bias_acc
    if direction == "lower":
        return a_pos @ box.lo + a_neg @ box.hi + form.bias_acc
    raise ValueError(f"direction must be 'upper' or 'lower', got {direction!r}")


def _interval_affine(layer: AffineLayer, lo: np.ndarray, hi: np.ndarray):
    w_pos = np.clip(layer.weight, 0.0, None)
    w_neg = np.clip(layer.weight, None, 0.0)
    l = w_pos @ lo + w_neg @ hi + layer.bias
    u = w_pos @ hi + w_neg @ lo + layer.bias
    return l, u


def _clamp_overrides(
    l: np.ndarray, u: np.ndarray, layer: int, overrides, prior, tilde_eps: float
):
    if prior is not None:
        # both enclosures are valid on the sub-region; keep the tighter one so
        # refinement never loosens an interval
        l = np.maximum(l, prior[layer].l)
        u = np.minimum(u, prior[layer].u)
        if np.any(l > u):
            raise InfeasibleDomainError(
                f"layer {layer}: prior and recomputed intervals are disjoint"
            )
    if not overrides:
        return l, u
    l = l.copy()
    u = u.copy()
    for (li, ni), sign in overrides.items():
        if li != layer:
            continue
        if sign < 0:
            u[ni] = min(u[ni], -tilde_eps)
        else:
            l[ni] = max(l[ni], tilde_eps)
        if l[ni] > u[ni]:
            raise InfeasibleDomainError(
                f"neuron ({li}, {ni}) constrained to sign {sign:+d} has empty interval"
            )
    return l, u


def preactivation_bounds(
    net: Network,
    box: BoxDomain,
    overrides: dict[tuple[int, int], int] | None = None,
    method: str = "backward",
    lower_slope_policy: str = "adaptive",
    tilde_eps: float = 1e-9,
    prior: list[LayerIntervals] | None = None,
) -> list[LayerIntervals]:
    """Intervals on every hidden layer's pre-activation over the box.

    ``overrides`` maps (hidden layer index, neuron index) to a sign (+1 / -1)
    and clamps that neuron's interval to (tilde_eps, u) or (l, -tilde_eps)
    after the layer is bounded; an empty intersection raises
    InfeasibleDomainError. Layer indices are 0-based positions in
    ``net.layers``; only layers 0..n-2 have activations.

    ``prior`` intervals (for example the parent domain's, in branch-and-bound)
    are intersected in, so refinement only ever tightens. ``method`` is
    "backward" (full backward propagation per layer, default) or "interval"
    (plain interval arithmetic, cheaper and looser).
    """
    if box.dim != net.input_dim:
        raise ValueError(f"box dimension {box.dim} != network input dim {net.input_dim}")
    if method not in ("backward", "interval"):
        raise ValueError(f"method must be 'backward' or 'interval', got {method!r}")
    n_hidden = net.n_layers - 1
    intervals: list[LayerIntervals] = []

    if method == "interval":
        lo, hi = box.lo, box.hi
        for k in range(n_hidden):
            l, u = _interval_affine(net.layers[k], lo, hi)
            l, u = _clamp_overrides(l, u, k, overrides, prior, tilde_eps)
            intervals.append(LayerIntervals(l, u))
            lo, hi = np.maximum(l, 0.0), np.maximum(u, 0.0)
        return intervals

    relaxed: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
    for k in range(n_hidden):
        layer = net.layers[k]
        up = LinearForm(layer.weight.copy(), layer.bias.copy())
        down = LinearForm(layer.weight.copy(), layer.bias.copy())
        for j in range(k - 1, -1, -1):
            up = backward_substitute(up, *relaxed[j], direction="upper")
            down = backward_substitute(down, *relaxed[j], direction="lower")
        u = concretize(up, box, "upper")
        l = concretize(down, box, "lower")
        l, u = _clamp_overrides(l, u, k, overrides, prior, tilde_eps)
        intervals.append(LayerIntervals(l, u))
        relax = relu_relaxation(l, u, lower_slope_policy)
        relaxed.append(relaxation_matrices(layer, relax))
    return intervals
