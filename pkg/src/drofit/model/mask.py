"""Band-structured attention mask over the concatenated token sequence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig


@dataclass(frozen=True)
class AttentionMask:
    matrix: np.ndarray  # [L, L] bool, full-band tokens first
    n_full: int
    n_sub: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def pairs(self) -> int:
        return int(self.matrix.sum())


def window_block(n: int, w: int | None) -> np.ndarray:
    """Each query attends exactly ``min(w, n)`` keys, centred where possible.

    Near a band edge the window slides inward instead of shrinking, so every
    row costs the same and the block holds ``n * min(w, n)`` pairs.
    """
    block = np.zeros((n, n), dtype=bool)
    span = n if w is None else min(w, n)
    for i in range(n):
        start = min(max(i - span // 2, 0), n - span)
        block[i, start: start + span] = True
    return block


def build_attention_mask(config: ModelConfig, cross: bool = True) -> AttentionMask:
    """Windowed self-path blocks plus fully attended cross-band blocks.

    ``cross=False`` drops the full/sub interaction blocks (used to check that
    the two paths only communicate through them).
    """
    nf, ns = config.n_full, config.n_sub
    mask = np.zeros((nf + ns, nf + ns), dtype=bool)
    mask[:nf, :nf] = window_block(nf, config.w_full)
    mask[nf:, nf:] = window_block(ns, config.w_sub)
    if cross:
        mask[:nf, nf:] = True
        mask[nf:, :nf] = True
    return AttentionMask(mask, nf, ns)


def expected_pairs(config: ModelConfig) -> int:
    nf, ns = config.n_full, config.n_sub
    wf = nf if config.w_full is None else min(config.w_full, nf)
    ws = ns if config.w_sub is None else min(config.w_sub, ns)
    return nf * wf + 2 * nf * ns + ns * ws
