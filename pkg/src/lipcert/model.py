"""Feedforward ReLU networks: JSON loading, conv lowering, forward passes, Jacobians.

A network is kept in canonical form: an ordered list of affine layers with a
ReLU after every layer except the last. Convolutions are lowered to dense
matrices at load time, and consecutive affine layers with no activation in
between are fused (exact composition), so downstream bound propagation only
ever sees the alternating affine/ReLU structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class ModelFormatError(ValueError):
    """Raised when a model file or layer specification is invalid."""


@dataclass(frozen=True)
class AffineLayer:
    """One dense layer: x -> weight @ x + bias."""

    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1:
            raise ModelFormatError(
                f"weight must be 2-d and bias 1-d, got {w.ndim}-d and {b.ndim}-d"
            )
        if w.shape[0] != b.shape[0]:
            raise ModelFormatError(
                f"weight has {w.shape[0]} rows but bias has length {b.shape[0]}"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ModelFormatError("non-finite entries in weight or bias")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class ConvSpec:
    """A 2-d convolution over a (channels, height, width) input.

    Cross-correlation with the given stride and zero padding; the bias is
    shared across spatial positions of each output channel.
    """

    kernel: np.ndarray  # (out_ch, in_ch, kh, kw)
    bias: np.ndarray  # (out_ch,)
    stride: tuple[int, int]
    padding: tuple[int, int]
    input_shape: tuple[int, int, int]  # (channels, height, width)

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if k.ndim != 4:
            raise ModelFormatError(f"conv kernel must be 4-d, got {k.ndim}-d")
        if b.shape != (k.shape[0],):
            raise ModelFormatError(
                f"conv bias length {b.shape[0] if b.ndim == 1 else b.shape} "
                f"does not match {k.shape[0]} output channels"
            )
        if not (np.isfinite(k).all() and np.isfinite(b).all()):
            raise ModelFormatError("non-finite entries in conv kernel or bias")
        if len(self.input_shape) != 3:
            raise ModelFormatError("conv input_shape must be (channels, height, width)")
        if k.shape[1] != self.input_shape[0]:
            raise ModelFormatError(
                f"kernel expects {k.shape[1]} input channels, input has {self.input_shape[0]}"
            )
        if min(self.stride) < 1 or min(self.padding) < 0:
            raise ModelFormatError("stride must be positive and padding non-negative")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "stride", (int(self.stride[0]), int(self.stride[1])))
        object.__setattr__(self, "padding", (int(self.padding[0]), int(self.padding[1])))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))

    @property
    def output_shape(self) -> tuple[int, int, int]:
        oc, _, kh, kw = self.kernel.shape
        _, h, w = self.input_shape
        oh = (h + 2 * self.padding[0] - kh) // self.stride[0] + 1
        ow = (w + 2 * self.padding[1] - kw) // self.stride[1] + 1
        if oh < 1 or ow < 1:
            raise ModelFormatError(
                f"conv output spatial dims {(oh, ow)} are not positive"
            )
        return (oc, oh, ow)


@dataclass(frozen=True)
class Network:
    """Feedforward ReLU network in canonical form.

    ``layers[i]`` is applied to the output of ``layers[i-1]`` after a ReLU;
    the last layer's output is returned without activation.
    """

    layers: tuple[AffineLayer, ...]

    def __post_init__(self):
        if not self.layers:
            raise ModelFormatError("network needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))
        for i in range(1, len(self.layers)):
            if self.layers[i].in_dim != self.layers[i - 1].out_dim:
                raise ModelFormatError(
                    f"layer {i} expects input dim {self.layers[i].in_dim}, "
                    f"layer {i - 1} outputs {self.layers[i - 1].out_dim}"
                )

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def activation_after(self) -> tuple[bool, ...]:
        return tuple([True] * (self.n_layers - 1) + [False])

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(layer.out_dim for layer in self.layers[:-1])


def lower_conv(spec: ConvSpec) -> AffineLayer:
    """Lower a convolution to an equivalent dense affine layer.

    Both the input and output tensors are flattened row-major in
    (channel, row, column) order, so ``M @ flatten(x) + v`` equals the
    flattened convolution output for every input x.
    """
    oc, ic, kh, kw = spec.kernel.shape
    _, h, w = spec.input_shape
    _, oh, ow = spec.output_shape
    sh, sw = spec.stride
    ph, pw = spec.padding
    mat = np.zeros((oc * oh * ow, ic * h * w))
    vec = np.zeros(oc * oh * ow)
    for o in range(oc):
        for oy in range(oh):
            for ox in range(ow):
                row = (o * oh + oy) * ow + ox
                vec[row] = spec.bias[o]
                for i in range(ic):
                    for ky in range(kh):
                        y = oy * sh + ky - ph
                        if y < 0 or y >= h:
                            continue
                        for kx in range(kw):
                            x = ox * sw + kx - pw
                            if x < 0 or x >= w:
                                continue
                            mat[row, (i * h + y) * w + x] += spec.kernel[o, i, ky, kx]
    return AffineLayer(mat, vec)


def forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Evaluate the network, returning (output, pre-activations of hidden layers)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({net.input_dim},)")
    preacts = []
    h = x
    for k, layer in enumerate(net.layers):
        z = layer.weight @ h + layer.bias
        if k < net.n_layers - 1:
            preacts.append(z)
            h = np.maximum(z, 0.0)
        else:
            h = z
    return h, preacts


def jacobian_at(net: Network, x: np.ndarray, zero_rule: str = "one") -> np.ndarray:
    """One Clarke Jacobian of the network at x.

    At neurons with pre-activation exactly zero, the ReLU derivative is taken
    as 1 (``zero_rule="one"``, the default) or 0 (``"zero"``); both choices
    are valid elements of the Clarke set.
    """
    if zero_rule not in ("zero", "one"):
        raise ValueError(f"zero_rule must be 'zero' or 'one', got {zero_rule!r}")
    at_zero = 1.0 if zero_rule == "one" else 0.0
    _, preacts = forward(net, x)
    jac = net.layers[0].weight
    for k in range(1, net.n_layers):
        z = preacts[k - 1]
        delta = np.where(z > 0, 1.0, np.where(z < 0, 0.0, at_zero))
        jac = net.layers[k].weight @ (delta[:, None] * jac)
    return jac


def _fuse(a: AffineLayer, b: AffineLayer) -> AffineLayer:
    # b(a(x)) with no activation in between is a single affine map
    return AffineLayer(b.weight @ a.weight, b.weight @ a.bias + b.bias)


def load_network(path: str) -> Network:
    """Load a version-1 JSON model file into a canonical Network.

    Conv layers are lowered to dense ones and affine layers not separated by
    a ReLU are fused, so the result always alternates affine/ReLU.
    """
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"malformed JSON in {path}: {e}") from e
    return network_from_dict(doc)


def network_from_dict(doc: dict) -> Network:
    """Build a Network from an already-parsed version-1 model dict."""
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    if doc.get("version") != 1:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    shape = doc.get("input_shape")
    if not isinstance(shape, list) or len(shape) not in (1, 3):
        raise ModelFormatError("input_shape must be [d] or [channels, height, width]")
    entries = doc.get("layers")
    if not isinstance(entries, list) or not entries:
        raise ModelFormatError("layers must be a non-empty list")

    # spatial shape is tracked while layers are conv; None once flattened
    spatial = tuple(int(d) for d in shape) if len(shape) == 3 else None
    width = int(np.prod(shape))

    layers: list[AffineLayer] = []
    pending: AffineLayer | None = None  # affine not yet closed by a relu
    for idx, entry in enumerate(entries):
        kind = entry.get("type") if isinstance(entry, dict) else None
        if kind == "relu":
            if pending is None:
                raise ModelFormatError(
                    f"layer {idx}: relu must follow a dense or conv2d layer"
                )
            if idx == len(entries) - 1:
                raise ModelFormatError(f"layer {idx}: relu must not be last")
            layers.append(pending)
            pending = None
            continue
        if kind == "dense":
            try:
                affine = AffineLayer(np.array(entry["weight"]), np.array(entry["bias"]))
            except (ModelFormatError, KeyError, ValueError) as e:
                raise ModelFormatError(f"layer {idx}: {e}") from e
            if affine.in_dim != width:
                raise ModelFormatError(
                    f"layer {idx}: dense expects input dim {affine.in_dim}, "
                    f"previous width is {width}"
                )
            spatial = None
        elif kind == "conv2d":
            if spatial is None:
                raise ModelFormatError(
                    f"layer {idx}: conv2d requires a (c, h, w) input, "
                    "but the running shape is flat"
                )
            try:
                spec = ConvSpec(
                    kernel=np.array(entry["kernel"]),
                    bias=np.array(entry["bias"]),
                    stride=tuple(entry.get("stride", [1, 1])),
                    padding=tuple(entry.get("padding", [0, 0])),
                    input_shape=spatial,
                )
                spatial = spec.output_shape
            except (ModelFormatError, KeyError, ValueError, TypeError) as e:
                raise ModelFormatError(f"layer {idx}: {e}") from e
            affine = lower_conv(spec)
        else:
            raise ModelFormatError(f"layer {idx}: unsupported layer type {kind!r}")
        width = affine.out_dim
        pending = affine if pending is None else _fuse(pending, affine)

    if pending is None:
        raise ModelFormatError("model must end with a dense or conv2d layer")
    layers.append(pending)
    return Network(tuple(layers))
