"""Hierarchical seed derivation: master -> per-stage -> per-item.

sha256-based so results are stable across processes and platforms
(independent of PYTHONHASHSEED); per-scene seeds combine by XOR with the
scene index so any item is reproducible in isolation.
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *labels) -> int:
    """Deterministic 63-bit seed from a master seed and a label path."""
    text = ":".join([str(int(master))] + [str(x) for x in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def item_seed(stage_seed: int, index: int) -> int:
    return (stage_seed ^ index) & (2**63 - 1)
