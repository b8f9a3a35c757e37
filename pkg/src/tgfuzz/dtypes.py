"""Datatype labels and their physical storage formats.

Six labels are tracked for coverage purposes even though two of them
(``half``/``float16`` and ``double``/``float64``) alias the same storage
format.  Coverage always counts labels, never storage.
"""

from __future__ import annotations

import ml_dtypes
import numpy as np

# Label -> storage format. Exactly six labels, four storages.
DTYPE_LABELS: dict[str, str] = {
    "bfloat16": "bf16",
    "double": "f64",
    "float16": "f16",
    "float32": "f32",
    "float64": "f64",
    "half": "f16",
}

ALL_LABELS: tuple[str, ...] = tuple(sorted(DTYPE_LABELS))

_STORAGE_NP: dict[str, np.dtype] = {
    "bf16": np.dtype(ml_dtypes.bfloat16),
    "f16": np.dtype(np.float16),
    "f32": np.dtype(np.float32),
    "f64": np.dtype(np.float64),
}

# Kernels accumulate in at least f32; narrow formats are quantized back
# to storage after every node so both interpreters share one policy.
_COMPUTE_NP: dict[str, np.dtype] = {
    "bf16": np.dtype(np.float32),
    "f16": np.dtype(np.float32),
    "f32": np.dtype(np.float32),
    "f64": np.dtype(np.float64),
}


def is_label(name: str) -> bool:
    return name in DTYPE_LABELS


def storage_of(label: str) -> str:
    """Physical storage format ('f16'/'bf16'/'f32'/'f64') for a label."""
    try:
        return DTYPE_LABELS[label]
    except KeyError:
        raise ValueError(f"unknown dtype label: {label!r}") from None


def numpy_dtype(label: str) -> np.dtype:
    return _STORAGE_NP[storage_of(label)]


def compute_dtype(label: str) -> np.dtype:
    return _COMPUTE_NP[storage_of(label)]


def quantize(array: np.ndarray, label: str) -> np.ndarray:
    """Round an array to the label's storage format."""
    return np.asarray(array).astype(numpy_dtype(label))


def is_narrow(label: str) -> bool:
    """True for storages excluded from the inconsistency oracle."""
    return storage_of(label) in ("f16", "bf16")
