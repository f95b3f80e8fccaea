"""Fixed-architecture scalar networks with hand-rolled reverse-mode gradients.

Two kinds share one layout: the input-convex kind concatenates the scalar
input into every layer and keeps all hidden-to-hidden weights (including the
output weights) nonnegative, which makes the output convex in the input; the
plain kind is an unconstrained MLP. Both are 4 hidden ELU layers of width 64
by default, scalar in, scalar out.

Forward passes can propagate the value, the input derivative, and the input
second derivative; a recorded tape supports parameter gradients of losses
that involve both the value and the input derivative.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import TapeMismatch

DEFAULT_DEPTH = 4
DEFAULT_WIDTH = 64

PARAM_NAMES = ("w_in", "b", "a_hidden", "w_skip", "a_out", "w_out", "b_out")


class ScalarMlp:
    """Parameter container; `kind` is 'icnn' or 'plain'."""

    kind = "plain"

    def __init__(self, w_in, b, a_hidden, w_skip, a_out, w_out, b_out):
        self.w_in = np.ascontiguousarray(w_in, dtype=np.float64)
        self.b = np.ascontiguousarray(b, dtype=np.float64)
        self.a_hidden = np.ascontiguousarray(a_hidden, dtype=np.float64)
        self.w_skip = np.ascontiguousarray(w_skip, dtype=np.float64)
        self.a_out = np.ascontiguousarray(a_out, dtype=np.float64)
        # 0-d arrays so in-place optimizer updates reach the container
        self.w_out = np.asarray(float(w_out), dtype=np.float64)
        self.b_out = np.asarray(float(b_out), dtype=np.float64)

    @property
    def depth(self):
        return self.b.shape[0]

    @property
    def width(self):
        return self.b.shape[1]

    @property
    def has_skip(self):
        return self.kind == "icnn"

    def param_arrays(self):
        """Ordered (name, array) pairs of the trainable parameters."""
        pairs = [("w_in", self.w_in), ("b", self.b), ("a_hidden", self.a_hidden)]
        if self.has_skip:
            pairs.append(("w_skip", self.w_skip))
        pairs.append(("a_out", self.a_out))
        if self.has_skip:
            pairs.append(("w_out", self.w_out))
        pairs.append(("b_out", self.b_out))
        return pairs

    def copy(self):
        out = type(self)(self.w_in.copy(), self.b.copy(), self.a_hidden.copy(),
                         self.w_skip.copy(), self.a_out.copy(),
                         float(self.w_out), float(self.b_out))
        return out

    def all_finite(self):
        for _, arr in self.param_arrays():
            if not np.all(np.isfinite(arr)):
                return False
        return True


class IcnnNet(ScalarMlp):
    kind = "icnn"


class PlainNet(ScalarMlp):
    kind = "plain"


def _glorot(rng, shape, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_icnn(rng, depth=DEFAULT_DEPTH, width=DEFAULT_WIDTH):
    """Input-convex net: hidden-to-hidden weights start at |glorot draw|,
    scaled by 2/width so the all-positive rows keep the layer gain near one
    (unscaled, the nonnegative row sums grow like width and the initial
    outputs reach O(100)); biases start at zero. Convex from the first step.
    """
    scale = 2.0 / width
    w_in = _glorot(rng, width, 1, width)
    b = np.zeros((depth, width))
    a_hidden = np.empty((depth - 1, width, width))
    w_skip = np.empty((depth - 1, width))
    for l in range(depth - 1):
        a_hidden[l] = np.abs(_glorot(rng, (width, width), width, width)) * scale
        w_skip[l] = _glorot(rng, width, 1, width)
    a_out = np.abs(_glorot(rng, width, width, 1)) * scale
    w_out = float(_glorot(rng, (), 1, 1))
    return IcnnNet(w_in, b, a_hidden, w_skip, a_out, w_out, 0.0)


def init_plain(rng, depth=DEFAULT_DEPTH, width=DEFAULT_WIDTH):
    w_in = _glorot(rng, width, 1, width)
    b = np.zeros((depth, width))
    a_hidden = np.empty((depth - 1, width, width))
    for l in range(depth - 1):
        a_hidden[l] = _glorot(rng, (width, width), width, width)
    a_out = _glorot(rng, width, width, 1)
    w_skip = np.zeros((depth - 1, width))  # unused, kept for layout symmetry
    return PlainNet(w_in, b, a_hidden, w_skip, a_out, 0.0, 0.0)


def project_nonneg(net):
    """Clamp the convexity-carrying weights at zero (in place)."""
    if net.kind == "icnn":
        np.maximum(net.a_hidden, 0.0, out=net.a_hidden)
        np.maximum(net.a_out, 0.0, out=net.a_out)
    return net


@dataclass
class Tape:
    """Recorded forward pass: enough state to reverse to parameter gradients."""

    net: ScalarMlp
    n: int
    cache: tuple


def forward_batch(net, xs, order=0, want_cache=False):
    """Returns (y, dy, d2y, tape); dy/d2y are None below the requested order."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    y, dy, d2y, cache = _backend.forward(
        xs, net.w_in, net.b, net.a_hidden, net.w_skip, net.a_out,
        float(net.w_out), float(net.b_out), net.has_skip,
        order=order, want_cache=want_cache)
    tape = Tape(net, xs.shape[0], cache) if want_cache else None
    return y, dy, d2y, tape


def net_forward(net, x):
    """Scalar forward value."""
    y, _, _, _ = forward_batch(net, np.array([float(x)]))
    return float(y[0])


def net_input_grad(net, x):
    """Scalar derivative of the output with respect to the input."""
    _, dy, _, _ = forward_batch(net, np.array([float(x)]), order=1)
    return float(dy[0])


def net_input_curvature(net, x):
    """Scalar second derivative of the output with respect to the input."""
    _, _, d2y, _ = forward_batch(net, np.array([float(x)]), order=2)
    return float(d2y[0])


def net_param_grads(net, tape, gy, gdy=None, want_input_grad=False):
    """Parameter gradients for a loss with per-sample upstream gradients gy
    (on the value) and optionally gdy (on the input derivative).

    Returns (grads, gx) where grads maps parameter names to arrays shaped like
    the parameters and gx is d(loss)/d(inputs) when requested.
    """
    if tape is None or tape.cache is None:
        raise TapeMismatch("no recorded tape; run forward_batch(want_cache=True)")
    if tape.net is not net:
        raise TapeMismatch("tape was recorded for a different network")
    gy = np.asarray(gy, dtype=np.float64)
    if gy.shape != (tape.n,):
        raise TapeMismatch(f"upstream gy has shape {gy.shape}, tape batch is {tape.n}")
    if gdy is not None:
        gdy = np.asarray(gdy, dtype=np.float64)
        if gdy.shape != (tape.n,):
            raise TapeMismatch(f"upstream gdy has shape {gdy.shape}, tape batch is {tape.n}")
    g_win, g_b, g_A, g_skip, g_aout, g_wout, g_bout, gx = _backend.backward(
        tape.cache, net.w_in, net.a_hidden, net.w_skip, net.a_out,
        float(net.w_out), net.has_skip, gy, gdy, want_gx=want_input_grad)
    grads = {"w_in": g_win, "b": g_b, "a_hidden": g_A, "a_out": g_aout,
             "b_out": np.asarray(g_bout)}
    if net.has_skip:
        grads["w_skip"] = g_skip
        grads["w_out"] = np.asarray(g_wout)
    return grads, gx


# ---------------------------------------------------------------------------
# serialization: versioned record with a layer-size header and row-major
# flattened parameter blocks
# ---------------------------------------------------------------------------

RECORD_VERSION = 1


def net_to_record(net):
    rec = {
        "format_version": RECORD_VERSION,
        "kind": net.kind,
        "depth": int(net.depth),
        "width": int(net.width),
        "params": {},
    }
    for name, arr in net.param_arrays():
        rec["params"][name] = np.asarray(arr, dtype=np.float64).ravel().tolist()
    return rec


def net_from_record(rec):
    if rec.get("format_version") != RECORD_VERSION:
        raise ValueError(f"unsupported net record version {rec.get('format_version')!r}")
    depth, width = int(rec["depth"]), int(rec["width"])
    p = {k: np.asarray(v, dtype=np.float64) for k, v in rec["params"].items()}
    kind = rec["kind"]
    w_skip = p.get("w_skip", np.zeros((depth - 1) * width)).reshape(depth - 1, width)
    w_out = float(p["w_out"][0]) if "w_out" in p else 0.0
    cls = IcnnNet if kind == "icnn" else PlainNet
    return cls(p["w_in"], p["b"].reshape(depth, width),
               p["a_hidden"].reshape(depth - 1, width, width), w_skip,
               p["a_out"], w_out, float(p["b_out"][0]))
