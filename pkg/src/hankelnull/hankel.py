"""Hankel and stacked input-output Hankel matrices, plus excitation checks.

Row convention: lag-major blocks, channel-major inside each lag block. The
row of (lag l, channel j) for a c-channel signal sits at index l*c + j, and
a stacked matrix puts all input rows above all output rows.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "StackedHankel",
    "hankel",
    "stacked_hankel",
    "pe_order_check",
    "row_index",
]


def _as_signal(seq) -> np.ndarray:
    sig = np.asarray(seq, dtype=float)
    if sig.ndim == 1:
        sig = sig[:, None]
    if sig.ndim != 2:
        raise ValueError(f"signal must be 1-D or 2-D, got shape {sig.shape}")
    return sig


def hankel(seq, L: int) -> np.ndarray:
    """Block-Hankel matrix of a vector-valued sequence.

    Parameters
    ----------
    seq : array-like, shape (N,) or (N, c)
        Signal samples, one row per time step.
    L : int
        Window depth, the number of block rows.

    Returns
    -------
    ndarray, shape (c*L, N - L + 1)
        Column k holds samples k .. k+L-1 stacked as vectors.
    """
    sig = _as_signal(seq)
    N, c = sig.shape
    if L < 1:
        raise ValueError("window depth L must be >= 1")
    if N < L:
        raise ValueError(f"need at least L={L} samples, got {N}")
    win = sliding_window_view(sig, L, axis=0)  # (N-L+1, c, L)
    return win.transpose(2, 1, 0).reshape(c * L, N - L + 1)


@dataclass(frozen=True)
class StackedHankel:
    """Input Hankel block stacked over the output Hankel block."""

    matrix: np.ndarray
    m: int
    p: int
    L: int

    @property
    def d(self) -> int:
        return (self.m + self.p) * self.L

    @property
    def Nc(self) -> int:
        return self.matrix.shape[1]


def stacked_hankel(e, L: int) -> StackedHankel:
    """Stack hankel(e.u, L) on top of hankel(e.y, L) for an experiment."""
    Hu = hankel(e.u, L)
    Hy = hankel(e.y, L)
    return StackedHankel(np.vstack([Hu, Hy]), Hu.shape[0] // L, Hy.shape[0] // L, L)


def pe_order_check(U, order: int, tol: float = 1e-10) -> bool:
    """True iff hankel(U, order) has full row rank m*order.

    Rank is the count of singular values above tol * sigma_max, so the check
    is scale-free.
    """
    sig = _as_signal(U)
    sv = np.linalg.svd(hankel(sig, order), compute_uv=False)
    rank = int(np.count_nonzero(sv > tol * sv[0]))
    return rank == sig.shape[1] * order


def row_index(kind: str, channel: int, lag: int, m: int, p: int, L: int) -> int:
    """Flat row position of (kind, channel, lag) in a stacked Hankel matrix."""
    if kind == "input":
        width, base = m, 0
    elif kind == "output":
        width, base = p, m * L
    else:
        raise ValueError(f"kind must be 'input' or 'output', got {kind!r}")
    if not 0 <= lag < L:
        raise ValueError(f"lag {lag} out of range for L={L}")
    if not 0 <= channel < width:
        raise ValueError(f"channel {channel} out of range for {kind} width {width}")
    return base + lag * width + channel
