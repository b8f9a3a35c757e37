"""Reference interpreter: straightforward per-operator kernels, evaluated
in topological order at each node's declared dtype.

Numeric contract shared with the optimizing interpreter (results must be
bitwise-identical at f64 when no rewrite fires there):
  - convolution sums run as one GEMM over patches flattened in
    (kernel_h, kernel_w, channel) C-order; bias added after the GEMM
  - narrow storages (f16/bf16) compute in f32 and quantize per node
  - batch norm: y = (x - mean) * (gamma * rsqrt(var + eps)) + beta
  - layer norm uses the population variance of the last axis
  - average pooling divides by the full window area (zero padding counts)
"""

from __future__ import annotations

import traceback
import warnings

import numpy as np

from ..dtypes import compute_dtype, quantize
from ..graph import ModelGraph, validate
from ..infer import InferenceFailure, infer_specs
from ..registry import Registry
from ..weights import WEIGHT_SLOTS, ValueTensor, graph_weights
from . import Backend, BuildFailure, RunFailure
from .contract import same_pad_amounts


def gather_patches(x: np.ndarray, kernel: tuple[int, int], stride: tuple[int, int],
                   dilation: tuple[int, int], pad: str, pad_value: float) -> np.ndarray:
    """(b, oh, ow, kh, kw, c) patch tensor via explicit index arithmetic."""
    if pad == "same":
        pt, pb = same_pad_amounts(x.shape[1], kernel[0], stride[0], dilation[0])
        pl, pr = same_pad_amounts(x.shape[2], kernel[1], stride[1], dilation[1])
        x = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)),
                   constant_values=pad_value)
    h, w = x.shape[1], x.shape[2]
    keh = (kernel[0] - 1) * dilation[0] + 1
    kew = (kernel[1] - 1) * dilation[1] + 1
    oh = (h - keh) // stride[0] + 1
    ow = (w - kew) // stride[1] + 1
    iy = np.arange(oh)[:, None] * stride[0] + np.arange(kernel[0])[None, :] * dilation[0]
    ix = np.arange(ow)[:, None] * stride[1] + np.arange(kernel[1])[None, :] * dilation[1]
    # fancy-index yields (b, oh, kh, ow, kw, c); move to (b, oh, ow, kh, kw, c)
    patches = x[:, iy[:, :, None, None], ix[None, None, :, :], :]
    return np.moveaxis(patches, 2, 3)


def _activation(x: np.ndarray, name: str) -> np.ndarray:
    if name == "linear":
        return x
    if name == "relu":
        return np.maximum(x, 0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-x))
    if name == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {name!r}")


def active_weight_slots(kind: str, params: dict) -> list[str]:
    """Weight slot names actually present given the node's params."""
    out = []
    for name in WEIGHT_SLOTS.get(kind, ()):
        if name == "bias" and not params.get("use_bias", True):
            continue
        if name == "gamma" and not params.get("scale", True):
            continue
        if name == "beta" and not params.get("center", True):
            continue
        out.append(name)
    return out


class EagerBackend(Backend):
    id = "eager"
    _ns = "eager"

    def __init__(self, registry: Registry):
        self.registry = registry

    def build(self, graph: ModelGraph, weight_overrides=None):
        try:
            g = infer_specs(graph, self.registry)
        except InferenceFailure:
            raise BuildFailure(traceback.format_exc()) from None
        violations = validate(g, self.registry)
        if violations:
            raise BuildFailure(
                "constraint violations: "
                + "; ".join(f"{v.node_id}:{v.constraint}" for v in violations))
        weights = graph_weights(g)
        if weight_overrides:
            for nid, tensors in weight_overrides.items():
                weights[nid] = tensors
        return (g, weights)

    def execute(self, handle, inputs: list[ValueTensor]):
        outputs, behavior, _ = self._run(handle, inputs, capture=False)
        return outputs, behavior

    def execute_captured(self, handle, inputs: list[ValueTensor]):
        return self._run(handle, inputs, capture=True)

    def _run(self, handle, inputs, capture):
        g, weights = handle
        if len(inputs) != len(g.graph_inputs):
            raise RunFailure(f"expected {len(g.graph_inputs)} inputs, got {len(inputs)}")
        values: dict[str, np.ndarray] = {}
        for (name, spec), vt in zip(g.graph_inputs, inputs):
            if tuple(vt.data.shape) != spec.shape:
                raise RunFailure(f"input {name} shape {vt.data.shape} != {spec.shape}")
            values[name] = np.asarray(vt.data)
        behavior: set[str] = set()
        captured: dict[str, np.ndarray] = {}
        try:
            with np.errstate(all="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                for nid in g.topo_order():
                    node = g.nodes[nid]
                    args = [values[src] for src, _ in node.inputs]
                    if nid in g.input_overrides:
                        fill = np.nan if g.input_overrides[nid] == "nan" else np.inf
                        ct = compute_dtype(node.dtype)
                        args = [np.full(a.shape, fill, dtype=ct) for a in args]
                        behavior.add(f"{self._ns}/{node.kind}/override_{g.input_overrides[nid]}")
                    ct = compute_dtype(node.dtype)
                    args = [np.asarray(a).astype(ct) for a in args]
                    wts = {
                        slot: t.data.astype(ct)
                        for slot, t in zip(active_weight_slots(node.kind, node.params),
                                           weights.get(nid, []))
                    }
                    out = self._kernel(node, args, wts, behavior)
                    out = quantize(out, node.dtype)
                    expected = g.specs[nid].shape
                    if tuple(out.shape) != expected:
                        raise RunFailure(
                            f"{nid}: kernel produced {out.shape}, spec says {expected}")
                    values[nid] = out
                    if capture:
                        captured[nid] = out
        except RunFailure:
            raise
        except Exception:
            raise RunFailure(traceback.format_exc()) from None
        outputs = [ValueTensor(g.spec_of(nid), values[nid])
                   for nid, _slot in g.graph_outputs]
        return outputs, behavior, captured

    # -- kernels ----------------------------------------------------------

    def _kernel(self, node, args, wt, behavior: set) -> np.ndarray:
        kind = node.kind
        p = node.params
        x = args[0]

        def mark(branch):
            behavior.add(f"{self._ns}/{kind}/{branch}")

        if kind == "Dense":
            y = np.matmul(x, wt["kernel"])
            if p.get("use_bias", True):
                y = y + wt["bias"]
                mark("bias")
            mark(f"act_{p['activation']}")
            return _activation(y, p["activation"])

        if kind == "Conv1D":
            mark(f"{p['padding']}_pad")
            patches = gather_patches(
                x[:, :, None, :], (p["kernel_size"], 1), (p["strides"], 1),
                (p["dilation_rate"], 1), p["padding"], 0.0)
            b, ot = patches.shape[0], patches.shape[1]
            flat = np.ascontiguousarray(patches).reshape(b, ot, -1)
            kmat = wt["kernel"].reshape(-1, wt["kernel"].shape[-1])
            y = np.matmul(flat, kmat)
            if p.get("use_bias", True):
                y = y + wt["bias"]
                mark("bias")
            mark(f"act_{p['activation']}")
            return _activation(y, p["activation"])

        if kind == "Conv2D":
            mark(f"{p['padding']}_pad")
            k, s, d = p["kernel_size"], p["strides"], p["dilation_rate"]
            patches = gather_patches(x, (k, k), (s, s), (d, d), p["padding"], 0.0)
            b, oh, ow = patches.shape[:3]
            flat = np.ascontiguousarray(patches).reshape(b, oh, ow, -1)
            kmat = wt["kernel"].reshape(-1, wt["kernel"].shape[-1])
            y = np.matmul(flat, kmat)
            if p.get("use_bias", True):
                y = y + wt["bias"]
                mark("bias")
            mark(f"act_{p['activation']}")
            return _activation(y, p["activation"])

        if kind == "SeparableConv2D":
            mark(f"{p['padding']}_pad")
            k, s, d = p["kernel_size"], p["strides"], p["dilation_rate"]
            patches = gather_patches(x, (k, k), (s, s), (d, d), p["padding"], 0.0)
            dw = np.einsum("bhwklc,klcm->bhwcm",
                           np.ascontiguousarray(patches), wt["depthwise_kernel"])
            b, oh, ow = dw.shape[:3]
            y = np.matmul(dw.reshape(b, oh, ow, -1), wt["pointwise_kernel"])
            if p.get("use_bias", True):
                y = y + wt["bias"]
                mark("bias")
            return y

        if kind in ("MaxPooling2D", "AveragePooling2D"):
            mark(f"{p['padding']}_pad")
            k, s = p["pool_size"], p["strides"]
            fill = -np.inf if kind == "MaxPooling2D" else 0.0
            win = gather_patches(x, (k, k), (s, s), (1, 1), p["padding"], fill)
            if kind == "MaxPooling2D":
                return np.max(win, axis=(3, 4))
            return np.sum(win, axis=(3, 4)) / float(k * k)

        if kind == "GlobalAveragePooling2D":
            mark("keepdims" if p.get("keepdims") else "flat")
            return np.mean(x, axis=(1, 2), keepdims=bool(p.get("keepdims")))

        if kind == "BatchNormalization":
            mark("scale" if p.get("scale", True) else "no_scale")
            c = x.shape[-1]
            gamma = wt.get("gamma", np.ones(c, x.dtype))
            beta = wt.get("beta", np.zeros(c, x.dtype))
            inv = 1.0 / np.sqrt(wt["moving_variance"] + np.asarray(p["epsilon"], x.dtype))
            return (x - wt["moving_mean"]) * (gamma * inv) + beta

        if kind == "LayerNormalization":
            mark("apply")
            c = x.shape[-1]
            gamma = wt.get("gamma", np.ones(c, x.dtype))
            beta = wt.get("beta", np.zeros(c, x.dtype))
            m = np.mean(x, axis=-1, keepdims=True)
            var = np.mean((x - m) ** 2, axis=-1, keepdims=True)
            inv = 1.0 / np.sqrt(var + np.asarray(p["epsilon"], x.dtype))
            return ((x - m) * inv) * gamma + beta

        if kind == "ReLU":
            t = np.asarray(p["threshold"], x.dtype)
            ns = np.asarray(p["negative_slope"], x.dtype)
            y = np.where(x < t, ns * (x - t), x)
            if p["threshold"] != 0:
                mark("threshold")
            if p["negative_slope"] != 0:
                mark("neg_slope")
            if p["max_value"] is not None:
                mark("max_value_branch")
                y = np.minimum(y, np.asarray(p["max_value"], x.dtype))
            else:
                mark("plain")
            return y

        if kind == "LeakyReLU":
            mark("apply")
            return np.where(x < 0, np.asarray(p["alpha"], x.dtype) * x, x)

        if kind == "ELU":
            mark("apply")
            return np.where(x < 0, np.asarray(p["alpha"], x.dtype) * np.expm1(x), x)

        if kind == "Softmax":
            ax = p["axis"]
            mark("neg_axis" if ax < 0 else "pos_axis")
            m = np.max(x, axis=ax, keepdims=True) if x.shape[ax] else np.zeros_like(x)
            e = np.exp(x - m)
            return e / np.sum(e, axis=ax, keepdims=True)

        if kind == "Dropout":
            mark("inference_identity")
            return x

        if kind == "Flatten":
            mark("apply")
            return x.reshape(x.shape[0], -1)

        if kind in ("Add", "Multiply"):
            mark(f"arity{len(args)}")
            y = args[0]
            for a in args[1:]:
                y = y + a if kind == "Add" else y * a
            return y

        if kind == "Concatenate":
            mark(f"axis_{p['axis']}")
            return np.concatenate(args, axis=p["axis"])

        if kind == "Cast":
            mark(f"to_{node.dtype}")
            return x

        if kind == "Reshape":
            mark("apply")
            return x.reshape(tuple(int(e) for e in p["target_shape"]))

        if kind == "Pad":
            mark("apply")
            return np.pad(x, tuple((int(b), int(a)) for b, a in p["padding"]),
                          constant_values=0.0)

        if kind == "Crop":
            mark("apply")
            sl = tuple(slice(int(b), dim - int(a))
                       for (b, a), dim in zip(p["cropping"], x.shape))
            return x[sl]

        raise ValueError(f"no kernel for kind {kind!r}")
