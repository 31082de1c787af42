"""Shared fixtures and independent oracle helpers for the test suite."""

import itertools

import numpy as np
import pytest

from lipcert import AffineLayer, BoxDomain, ConvSpec, Network, jacobian_at
from lipcert.cli import generate_model_dict
from lipcert.model import network_from_dict


def make_net(*pairs) -> Network:
    """Network from (weight, bias) pairs; ReLU between every pair."""
    return Network(tuple(AffineLayer(np.asarray(w, float), np.asarray(b, float)) for w, b in pairs))


def random_net(rng, dims, wscale=1.0, bscale=0.1) -> Network:
    layers = []
    for i in range(len(dims) - 1):
        w = rng.normal(size=(dims[i + 1], dims[i])) * wscale / np.sqrt(dims[i])
        b = rng.normal(size=dims[i + 1]) * bscale
        layers.append(AffineLayer(w, b))
    return Network(tuple(layers))


def gen_net(dims, seed, scale=1.0) -> Network:
    """Network built through the CLI generator (the `gen` subcommand's core)."""
    return network_from_dict(generate_model_dict(list(dims), seed=seed, scale=scale))


def jac_norm(net: Network, x) -> float:
    """l-inf operator norm (max abs row sum) of the Jacobian at x."""
    return float(np.max(np.sum(np.abs(jacobian_at(net, x)), axis=1)))


def direct_conv(spec: ConvSpec, x: np.ndarray) -> np.ndarray:
    """Sliding-window convolution oracle, independent of lower_conv.

    x has shape (channels, height, width); output is flattened row-major in
    (channel, row, column) order.
    """
    oc, ic, kh, kw = spec.kernel.shape
    _, h, w = spec.input_shape
    sh, sw = spec.stride
    ph, pw = spec.padding
    padded = np.zeros((ic, h + 2 * ph, w + 2 * pw))
    padded[:, ph:ph + h, pw:pw + w] = x
    _, oh, ow = spec.output_shape
    out = np.zeros((oc, oh, ow))
    for o in range(oc):
        for oy in range(oh):
            for ox in range(ow):
                patch = padded[:, oy * sh:oy * sh + kh, ox * sw:ox * sw + kw]
                out[o, oy, ox] = np.sum(patch * spec.kernel[o]) + spec.bias[o]
    return out.reshape(-1)


def corner_extreme(row: np.ndarray, bias: float, box: BoxDomain, direction: str) -> float:
    """Exact extreme of row . x + bias over the box by corner enumeration."""
    best = None
    for corner in itertools.product(*zip(box.lo, box.hi)):
        val = float(np.dot(row, corner)) + bias
        if best is None:
            best = val
        elif direction == "upper":
            best = max(best, val)
        else:
            best = min(best, val)
    return best


def delta_extreme_norm(net: Network, patterns) -> float:
    """Max exact Jacobian norm over explicit per-layer gradient assignments."""
    best = 0.0
    for grads in patterns:
        jac = net.layers[0].weight
        for k in range(1, net.n_layers):
            jac = net.layers[k].weight @ (np.asarray(grads[k - 1], float)[:, None] * jac)
        best = max(best, float(np.max(np.sum(np.abs(jac), axis=1))))
    return best


@pytest.fixture
def toy_unstable():
    """W1=[[1]], b=0, relu, W2=[[1]] over the box [-1, 1]: one unstable neuron."""
    net = make_net(([[1.0]], [0.0]), ([[1.0]], [0.0]))
    box = BoxDomain(np.array([-1.0]), np.array([1.0]))
    return net, box
