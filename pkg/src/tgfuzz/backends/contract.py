"""Numeric conventions every backend must honor.

These definitions are semantics, not implementation: they pin the values
a correct backend produces so that independent interpreters can be
compared bitwise at f64 when no graph rewrite fires.
"""

from __future__ import annotations


def same_pad_amounts(extent: int, kernel: int, stride: int, dilation: int) -> tuple[int, int]:
    """Zero-padding split for 'same' padding: floor half before, rest after."""
    k_eff = (kernel - 1) * dilation + 1
    out = -(-extent // stride)
    total = max((out - 1) * stride + k_eff - extent, 0)
    return total // 2, total - total // 2
