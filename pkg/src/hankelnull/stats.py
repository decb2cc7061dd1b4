"""One-pass mergeable aggregation of ensemble Hankel correlations.

Only two aggregates are kept per ensemble: G, the running sum of H_i H_i^T
over stacked Hankel matrices, and rowsum, the running sum of the row totals
H_i 1. Every moment-corrected assembly downstream is a function of these two
plus the experiment count, which is what makes the grid search cost
independent of the ensemble size.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .hankel import StackedHankel, stacked_hankel

__all__ = [
    "SufficientStats",
    "FinalizedStats",
    "aggregate",
    "save_stats",
    "load_stats",
]


@dataclass(frozen=True)
class FinalizedStats:
    """Per-experiment averages Gbar = G/count and rbar = rowsum/count."""

    Gbar: np.ndarray
    rbar: np.ndarray
    d: int
    Nc: int
    count: int


class SufficientStats:
    """Running sums over absorbed experiments. Mutable, single owner."""

    __slots__ = ("d", "Nc", "count", "G", "rowsum")

    def __init__(self, d: int, Nc: int):
        self.d = int(d)
        self.Nc = int(Nc)
        self.count = 0
        self.G = np.zeros((self.d, self.d))
        self.rowsum = np.zeros(self.d)

    def accumulate(self, H) -> "SufficientStats":
        """Absorb one stacked Hankel matrix."""
        M = H.matrix if isinstance(H, StackedHankel) else np.asarray(H, dtype=float)
        if M.shape != (self.d, self.Nc):
            raise ValueError(f"expected a {self.d}x{self.Nc} matrix, got {M.shape}")
        P = M @ M.T
        self.G += (P + P.T) / 2.0  # gemm output is not exactly symmetric; G must be
        self.rowsum += M.sum(axis=1)
        self.count += 1
        return self

    def merge(self, other: "SufficientStats") -> "SufficientStats":
        """Componentwise sum of two aggregates over disjoint experiment sets."""
        if (self.d, self.Nc) != (other.d, other.Nc):
            raise ValueError(f"shape mismatch: ({self.d},{self.Nc}) vs ({other.d},{other.Nc})")
        out = SufficientStats(self.d, self.Nc)
        out.count = self.count + other.count
        out.G = self.G + other.G
        out.rowsum = self.rowsum + other.rowsum
        return out

    def finalize(self) -> FinalizedStats:
        if self.count < 1:
            raise ValueError("cannot finalize an empty ensemble")
        return FinalizedStats(self.G / self.count, self.rowsum / self.count, self.d, self.Nc, self.count)


def _tree_sum(arr: np.ndarray) -> np.ndarray:
    """Pairwise sum along axis 0; error grows like log of the term count."""
    while arr.shape[0] > 1:
        half = arr.shape[0] // 2
        head = arr[: 2 * half : 2] + arr[1 : 2 * half : 2]
        if arr.shape[0] % 2:
            head = np.concatenate([head, arr[-1:]], axis=0)
        arr = head
    return arr[0]


def _block_stats(block, L: int, d: int, Nc: int) -> SufficientStats:
    Hs = np.stack([stacked_hankel(e, L).matrix for e in block])
    P = Hs @ Hs.transpose(0, 2, 1)
    P = (P + P.transpose(0, 2, 1)) / 2.0
    st = SufficientStats(d, Nc)
    st.G = _tree_sum(P)
    st.rowsum = _tree_sum(Hs.sum(axis=2))
    st.count = len(block)
    return st


def aggregate(ds, L: int, workers: int = 1, block_size: int = 512) -> SufficientStats:
    """Aggregate a dataset (or iterable of experiments) in canonical blocks.

    The block plan and the pairwise reduction tree depend only on the
    experiment order and block_size, never on `workers`, so the result is
    bitwise identical for any worker count.
    """
    exps = list(getattr(ds, "experiments", ds))
    if not exps:
        raise ValueError("nothing to aggregate")
    probe = stacked_hankel(exps[0], L)
    d, Nc = probe.d, probe.Nc
    blocks = [exps[i : i + block_size] for i in range(0, len(exps), block_size)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda b: _block_stats(b, L, d, Nc), blocks))
    else:
        parts = [_block_stats(b, L, d, Nc) for b in blocks]
    out = SufficientStats(d, Nc)
    out.G = _tree_sum(np.stack([s.G for s in parts]))
    out.rowsum = _tree_sum(np.stack([s.rowsum for s in parts]))
    out.count = sum(s.count for s in parts)
    return out


def save_stats(st: SufficientStats, path) -> None:
    """Write an aggregate snapshot as JSON with G in row-major order."""
    g = ",".join(f"{v:.17g}" for v in st.G.reshape(-1))
    r = ",".join(f"{v:.17g}" for v in st.rowsum)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write('{"d":%d,"Nc":%d,"count":%d,"G":[%s],"rowsum":[%s]}\n' % (st.d, st.Nc, st.count, g, r))


def load_stats(path) -> SufficientStats:
    """Read a snapshot written by save_stats."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    for key in ("d", "Nc", "count", "G", "rowsum"):
        if key not in obj:
            raise ValueError(f"{path}: missing field {key!r}")
    st = SufficientStats(obj["d"], obj["Nc"])
    G = np.asarray(obj["G"], dtype=float)
    if G.size != st.d * st.d:
        raise ValueError(f"{path}: G has {G.size} entries, expected {st.d * st.d}")
    st.G = G.reshape(st.d, st.d)
    st.rowsum = np.asarray(obj["rowsum"], dtype=float)
    if st.rowsum.shape != (st.d,):
        raise ValueError(f"{path}: rowsum has shape {st.rowsum.shape}, expected ({st.d},)")
    st.count = int(obj["count"])
    return st
