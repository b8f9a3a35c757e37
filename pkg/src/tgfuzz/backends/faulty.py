"""Fault-injected backend: the optimizing interpreter plus one seeded
defect, used as the acceptance target for the bug-detection pipeline.

Each catalog entry models a real defect class from public DL-library
issue trackers: a same-padding offset miscomputation gated on strided
dilated convolutions, a NaN-poisoned ReLU clipping path, and a hard
failure when a zero-width Dense result flows downstream.
"""

from __future__ import annotations

import numpy as np

from ..registry import Registry
from . import RunFailure
from .contract import same_pad_amounts
from .fused import FusedBackend

FAULT_CATALOG = {
    "pad_off_by_one": (
        "Conv2D same-padding amount forgets the dilation factor when "
        "strides > 1 and dilation_rate > 1, so the output loses rows "
        "(wrong shape inference class)"
    ),
    "relu_nan": (
        "ReLU emits NaN whenever the max_value clipping path is taken"
    ),
    "dense_zero_units": (
        "Dense with units=0 aborts execution (zero-width tensor downstream)"
    ),
}


class FaultyBackend(FusedBackend):
    def __init__(self, registry: Registry, fault_id: str):
        super().__init__(registry)
        if fault_id not in FAULT_CATALOG:
            raise ValueError(
                f"unknown fault {fault_id!r}; catalog: {sorted(FAULT_CATALOG)}")
        self.fault_id = fault_id
        self.id = f"faulty:{fault_id}"
        self._ns = f"faulty:{fault_id}"

    def _same_pad(self, extent, kernel, stride, dilation, kind):
        if (self.fault_id == "pad_off_by_one" and kind == "Conv2D"
                and stride > 1 and dilation > 1):
            # dilation dropped from the pad computation
            return same_pad_amounts(extent, kernel, stride, 1)
        return same_pad_amounts(extent, kernel, stride, dilation)

    def _relu(self, x, p, mark):
        y = super()._relu(x, p, mark)
        if self.fault_id == "relu_nan" and p["max_value"] is not None:
            return np.full_like(y, np.nan)
        return y

    def _dense(self, node, x, wt, mark):
        if self.fault_id == "dense_zero_units" and node.params["units"] == 0:
            raise RunFailure(
                f"fatal: zero-width tensor from dense node {node.id} "
                "(simulated core dump in kernel allocation)")
        return super()._dense(node, x, wt, mark)
