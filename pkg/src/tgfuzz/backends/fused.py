"""Optimizing interpreter: documented graph rewrites, then execution with
its own kernel implementations.

Rewrites (each emits a fusion path id when it fires):
  - conv_bn_fold:  BatchNormalization folded into the preceding Conv2D's
                   weights when it is the conv's sole consumer
  - conv_relu:     ReLU absorbed into the preceding Conv2D's epilogue
  - conv_bias_fold: bias carried inside the GEMM via an augmented column

Kernels follow the same numeric contract as the reference interpreter, so
graphs where no rewrite fires execute bitwise-identically at f64.
Patterns touching nodes with SpecialI input overrides are never rewritten.
"""

from __future__ import annotations

import traceback
import warnings

import numpy as np

from ..dtypes import compute_dtype, quantize
from ..graph import ModelGraph, TensorSpec, validate
from ..infer import InferenceFailure, infer_specs
from ..registry import Registry
from ..weights import ValueTensor, materialize_weights
from . import Backend, BuildFailure, RunFailure
from .contract import same_pad_amounts
from .eager import active_weight_slots


def _windows(x: np.ndarray, kernel: tuple[int, int], stride: tuple[int, int],
             dilation: tuple[int, int], pad: str, fill: float) -> np.ndarray:
    """(b, oh, ow, kh, kw, c) patches via sliding_window_view."""
    if pad == "same":
        pt, pb = same_pad_amounts(x.shape[1], kernel[0], stride[0], dilation[0])
        pl, pr = same_pad_amounts(x.shape[2], kernel[1], stride[1], dilation[1])
        x = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=fill)
    keh = (kernel[0] - 1) * dilation[0] + 1
    kew = (kernel[1] - 1) * dilation[1] + 1
    if x.shape[1] < keh or x.shape[2] < kew:
        # zero output positions; emit an empty patch tensor directly
        oh = max((x.shape[1] - keh) // stride[0] + 1, 0)
        ow = max((x.shape[2] - kew) // stride[1] + 1, 0)
        return np.zeros((x.shape[0], oh, ow, kernel[0], kernel[1], x.shape[3]),
                        dtype=x.dtype)
    view = np.lib.stride_tricks.sliding_window_view(x, (keh, kew), axis=(1, 2))
    # view: (b, h', w', c, keh, kew) -> subsample stride over positions,
    # dilation inside the window, then put axes in contract order
    view = view[:, ::stride[0], ::stride[1], :, ::dilation[0], ::dilation[1]]
    return np.ascontiguousarray(np.transpose(view, (0, 1, 2, 4, 5, 3)))


class _Plan:
    """Executable node list after rewrites, with prefolded weights."""

    def __init__(self, graph, order, weights, epilogue, fusion_paths):
        self.graph = graph
        self.order = order
        self.weights = weights  # node id -> dict slot -> np.ndarray (f64 master)
        self.epilogue = epilogue  # node id -> ReLU params fused into the node
        self.fusion_paths = fusion_paths


class FusedBackend(Backend):
    id = "fused"
    _ns = "fused"

    def __init__(self, registry: Registry):
        self.registry = registry

    # -- build: rewrite then prepare weights -------------------------------

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

        weights: dict[str, dict[str, np.ndarray]] = {}
        for nid, node in g.nodes.items():
            slots = active_weight_slots(node.kind, node.params)
            if not slots:
                continue
            if weight_overrides and nid in weight_overrides:
                tensors = weight_overrides[nid]
            else:
                tensors = materialize_weights(g, nid)
            weights[nid] = {
                slot: np.asarray(t.data, dtype=np.float64)
                for slot, t in zip(slots, tensors)
            }

        g = g.copy()
        fusion_paths: set[str] = set()
        epilogue: dict[str, dict] = {}
        self._fold_batchnorm(g, weights, fusion_paths)
        self._fuse_relu(g, epilogue, fusion_paths)
        return _Plan(g, g.topo_order(), weights, epilogue, fusion_paths)

    def _sole_compute_consumer(self, g: ModelGraph, nid: str):
        consumers = g.consumers(nid)
        if len(consumers) != 1 or any(o == nid for o, _ in g.graph_outputs):
            return None
        return consumers[0]

    def _fold_batchnorm(self, g, weights, fusion_paths):
        for nid in list(g.topo_order()):
            node = g.nodes.get(nid)
            if node is None or node.kind != "Conv2D":
                continue
            if node.params.get("activation") != "linear":
                continue
            cid = self._sole_compute_consumer(g, nid)
            if cid is None:
                continue
            bn = g.nodes[cid]
            if bn.kind != "BatchNormalization" or bn.dtype != node.dtype:
                continue
            if nid in g.input_overrides or cid in g.input_overrides:
                continue
            w = weights[nid]
            bw = weights.get(cid, {})
            c = g.specs[nid].shape[-1]
            gamma = bw.get("gamma", np.ones(c))
            beta = bw.get("beta", np.zeros(c))
            scale = gamma / np.sqrt(bw["moving_variance"] + float(bn.params["epsilon"]))
            kernel = w["kernel"] * scale
            bias = w.get("bias", np.zeros(c))
            bias = (bias - bw["moving_mean"]) * scale + beta
            weights[nid] = {"kernel": kernel, "bias": bias}
            self._splice_out(g, cid, nid)
            fusion_paths.add(f"{self._ns}/fusion/conv_bn_fold")

    def _fuse_relu(self, g, epilogue, fusion_paths):
        for nid in list(g.topo_order()):
            node = g.nodes.get(nid)
            if node is None or node.kind != "Conv2D":
                continue
            if node.params.get("activation") != "linear" or nid in epilogue:
                continue
            cid = self._sole_compute_consumer(g, nid)
            if cid is None:
                continue
            relu = g.nodes[cid]
            if relu.kind != "ReLU" or relu.dtype != node.dtype:
                continue
            if nid in g.input_overrides or cid in g.input_overrides:
                continue
            epilogue[nid] = dict(relu.params)
            self._splice_out(g, cid, nid)
            fusion_paths.add(f"{self._ns}/fusion/conv_relu")

    def _splice_out(self, g: ModelGraph, removed: str, replacement: str):
        """Delete a single-input node, rerouting its consumers/outputs."""
        del g.nodes[removed]
        g.specs.pop(removed, None)
        for cid in list(g.nodes):
            node = g.nodes[cid]
            if any(src == removed for src, _ in node.inputs):
                g.nodes[cid] = type(node)(
                    id=node.id, kind=node.kind, dtype=node.dtype,
                    params=node.params,
                    inputs=tuple((replacement if src == removed else src, slot)
                                 for src, slot in node.inputs),
                )
        g.graph_outputs = [
            (replacement if o == removed else o, slot)
            for o, slot in g.graph_outputs
        ]

    # -- execute ------------------------------------------------------------

    def execute(self, plan: _Plan, inputs: list[ValueTensor]):
        outputs, behavior, _ = self._run(plan, inputs, capture=False)
        return outputs, behavior

    def execute_captured(self, plan: _Plan, inputs: list[ValueTensor]):
        return self._run(plan, inputs, capture=True)

    def _run(self, plan, inputs, capture):
        g = plan.graph
        if len(inputs) != len(g.graph_inputs):
            raise RunFailure(f"expected {len(g.graph_inputs)} inputs, got {len(inputs)}")
        values: dict[str, np.ndarray] = {}
        for (name, spec), vt in zip(g.graph_inputs, inputs):
            if tuple(vt.data.shape) != spec.shape:
                raise RunFailure(f"input {name} shape {vt.data.shape} != {spec.shape}")
            values[name] = np.asarray(vt.data)
        behavior: set[str] = set(plan.fusion_paths)
        captured: dict[str, np.ndarray] = {}
        try:
            with np.errstate(all="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                for nid in plan.order:
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
                        slot: data.astype(ct)
                        for slot, data in plan.weights.get(nid, {}).items()
                    }
                    out = self._op(node, args, wts, plan.epilogue.get(nid), behavior)
                    out = quantize(out, node.dtype)
                    values[nid] = out
                    if capture:
                        captured[nid] = out
        except RunFailure:
            raise
        except Exception:
            raise RunFailure(traceback.format_exc()) from None
        # report what was actually computed; declared specs are the
        # reference interpreter's business
        outputs = []
        for nid, _slot in g.graph_outputs:
            arr = values[nid]
            outputs.append(ValueTensor(
                TensorSpec(g.nodes[nid].dtype, tuple(arr.shape)), arr))
        return outputs, behavior, captured

    # -- kernels ------------------------------------------------------------

    def _same_pad(self, extent, kernel, stride, dilation, kind):
        return same_pad_amounts(extent, kernel, stride, dilation)

    def _relu(self, x, p, mark):
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

    def _dense(self, node, x, wt, mark):
        if node.params["units"] == 0:
            mark("zero_units")
        y = np.matmul(x, wt["kernel"])
        if "bias" in wt:
            y = y + wt["bias"]
            mark("bias")
        mark(f"act_{node.params['activation']}")
        return self._act(y, node.params["activation"])

    def _act(self, x, name):
        if name == "linear":
            return x
        if name == "relu":
            return np.maximum(x, 0)
        if name == "sigmoid":
            return 1.0 / (1.0 + np.exp(-x))
        if name == "tanh":
            return np.tanh(x)
        raise ValueError(f"unknown activation {name!r}")

    def _conv_patches(self, node, x, kind):
        p = node.params
        if kind == "Conv1D":
            kernel, stride, dil = (p["kernel_size"], 1), (p["strides"], 1), (p["dilation_rate"], 1)
            x = x[:, :, None, :]
        else:
            k, s, d = p["kernel_size"], p["strides"], p["dilation_rate"]
            kernel, stride, dil = (k, k), (s, s), (d, d)
        if p["padding"] == "same":
            pt, pb = self._same_pad(x.shape[1], kernel[0], stride[0], dil[0], kind)
            pl, pr = self._same_pad(x.shape[2], kernel[1], stride[1], dil[1], kind)
            x = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=0.0)
        return _windows(x, kernel, stride, dil, "valid", 0.0)

    def _op(self, node, args, wt, fused_relu, behavior) -> np.ndarray:
        kind = node.kind
        p = node.params
        x = args[0]

        def mark(branch):
            behavior.add(f"{self._ns}/{kind}/{branch}")

        if kind == "Dense":
            return self._dense(node, x, wt, mark)

        if kind in ("Conv1D", "Conv2D"):
            mark(f"{p['padding']}_pad")
            patches = self._conv_patches(node, x, kind)
            b = patches.shape[0]
            pos = patches.shape[1:3]
            flat = patches.reshape(b, pos[0], pos[1], -1)
            kmat = wt["kernel"].reshape(-1, wt["kernel"].shape[-1])
            if "bias" in wt:
                mark("bias")
                behavior.add(f"{self._ns}/fusion/conv_bias_fold")
                ones = np.ones(flat.shape[:-1] + (1,), dtype=flat.dtype)
                aug = np.concatenate([flat, ones], axis=-1)
                kaug = np.concatenate([kmat, wt["bias"][None, :]], axis=0)
                y = np.matmul(aug, kaug)
            else:
                y = np.matmul(flat, kmat)
            if kind == "Conv1D":
                y = y[:, :, 0, :]
            mark(f"act_{p['activation']}")
            y = self._act(y, p["activation"])
            if fused_relu is not None:
                y = self._relu(y, fused_relu, lambda b2: behavior.add(f"{self._ns}/ReLU/{b2}"))
            return y

        if kind == "SeparableConv2D":
            mark(f"{p['padding']}_pad")
            patches = self._conv_patches(node, x, kind)
            dk = wt["depthwise_kernel"]
            b, oh, ow = patches.shape[:3]
            kh, kw, cin, dm = dk.shape
            acc = np.zeros((b, oh, ow, cin, dm), dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    acc += patches[:, :, :, i, j, :, None] * dk[i, j]
            y = np.matmul(acc.reshape(b, oh, ow, -1), wt["pointwise_kernel"])
            if "bias" in wt:
                mark("bias")
                y = y + wt["bias"]
            return y

        if kind in ("MaxPooling2D", "AveragePooling2D"):
            mark(f"{p['padding']}_pad")
            k, s = p["pool_size"], p["strides"]
            fill = -np.inf if kind == "MaxPooling2D" else 0.0
            win = _windows(x, (k, k), (s, s), (1, 1), p["padding"], fill)
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
            return self._relu(x, p, mark)

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
