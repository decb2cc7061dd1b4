"""Discrete-time LTI simulation and noisy multi-experiment dataset generation.

All randomness flows from a single root generator. Anything that touches
several experiments derives one child stream per experiment index up front,
so results are reproducible and independent of scheduling or worker count.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .hankel import pe_order_check

__all__ = [
    "StateSpace",
    "Experiment",
    "Dataset",
    "NoiseSpec",
    "NOISE_FAMILIES",
    "simulate",
    "generate_pe_input",
    "add_noise",
    "generate_dataset",
    "random_system",
    "save_dataset",
    "load_dataset",
]

NOISE_FAMILIES = ("gaussian", "uniform", "shifted-exponential")


@dataclass(frozen=True)
class StateSpace:
    """x_{k+1} = A x_k + B u_k,  y_k = C x_k + D u_k."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in "ABCD":
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n, m, p = self.A.shape[0], self.B.shape[1], self.C.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.shape != (n, m):
            raise ValueError(f"B must be {n}x{m}, got {self.B.shape}")
        if self.C.shape != (p, n):
            raise ValueError(f"C must be {p}x{n}, got {self.C.shape}")
        if self.D.shape != (p, m):
            raise ValueError(f"D must be {p}x{m}, got {self.D.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))


@dataclass(frozen=True)
class Experiment:
    """One input-output trajectory, u of shape (N, m) and y of shape (N, p)."""

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        for name in ("u", "y"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.ndim != 2:
                raise ValueError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
            object.__setattr__(self, name, arr)
        if self.u.shape[0] != self.y.shape[0]:
            raise ValueError(f"u has {self.u.shape[0]} samples but y has {self.y.shape[0]}")

    @property
    def length(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of experiments sharing N, m and p."""

    experiments: tuple

    def __post_init__(self):
        exps = tuple(self.experiments)
        if not exps:
            raise ValueError("dataset needs at least one experiment")
        first = exps[0]
        for e in exps[1:]:
            if e.u.shape != first.u.shape or e.y.shape != first.y.shape:
                raise ValueError("all experiments must share N, m and p")
        object.__setattr__(self, "experiments", exps)

    @property
    def Nt(self) -> int:
        return len(self.experiments)

    @property
    def N(self) -> int:
        return self.experiments[0].length

    @property
    def m(self) -> int:
        return self.experiments[0].u.shape[1]

    @property
    def p(self) -> int:
        return self.experiments[0].y.shape[1]


@dataclass(frozen=True)
class NoiseSpec:
    """I.i.d. scalar noise family pinned down by its first two raw moments.

    m1 and m2 are raw moments, so the variance is m2 - m1**2. A zero-variance
    spec is allowed and means a deterministic offset of m1. All families have
    finite moments of every order.
    """

    family: str
    m1: float
    m2: float

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}, expected one of {NOISE_FAMILIES}")
        if self.m2 < self.m1 ** 2:
            raise ValueError(f"m2={self.m2} implies negative variance for m1={self.m1}")

    @property
    def variance(self) -> float:
        return self.m2 - self.m1 ** 2

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        var = self.variance
        if var == 0.0:
            return np.full(shape, self.m1)
        if self.family == "gaussian":
            return rng.normal(self.m1, math.sqrt(var), shape)
        if self.family == "uniform":
            # half-width w solves (2w)^2 / 12 = var
            w = math.sqrt(3.0 * var)
            return rng.uniform(self.m1 - w, self.m1 + w, shape)
        # shifted exponential with scale s has mean shift+s and variance s^2
        s = math.sqrt(var)
        return (self.m1 - s) + rng.exponential(s, shape)


def simulate(ss: StateSpace, x0, U) -> Experiment:
    """Run the exact state recursion over an input sequence.

    Returns the experiment (U, Y) with y_k = C x_k + D u_k and
    x_{k+1} = A x_k + B u_k.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if U.ndim != 2 or U.shape[1] != ss.m:
        raise ValueError(f"U must be Nx{ss.m}, got shape {U.shape}")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape != (ss.n,):
        raise ValueError(f"x0 must have {ss.n} entries, got shape {np.shape(x0)}")
    N = U.shape[0]
    Y = np.empty((N, ss.p))
    for k in range(N):
        Y[k] = ss.C @ x + ss.D @ U[k]
        x = ss.A @ x + ss.B @ U[k]
    return Experiment(U.copy(), Y)


def generate_pe_input(N: int, m: int, order: int, rng: np.random.Generator, max_tries: int = 10) -> np.ndarray:
    """Draw an N x m input whose depth-`order` Hankel matrix has full row rank.

    Entries are i.i.d. standard normal, which is exciting with probability
    one; the rank is still verified and the draw retried a bounded number of
    times rather than assumed.
    """
    need = (m + 1) * order - 1  # below this, the Hankel matrix is too narrow for rank m*order
    if N < need:
        raise ValueError(f"N={N} cannot excite order {order} with m={m} inputs; need N >= {need}")
    for _ in range(max_tries):
        U = rng.standard_normal((N, m))
        if pe_order_check(U, order):
            return U
    raise RuntimeError(f"no exciting input of order {order} found in {max_tries} draws")


def add_noise(ds: Dataset, spec_u: NoiseSpec, spec_y: NoiseSpec, rng: np.random.Generator) -> Dataset:
    """Perturb every input and output sample by an independent draw.

    Each experiment gets its own child stream, and within a stream the input
    block is drawn before the output block, so corruption is reproducible and
    independent across time, channels, experiments and the two signals.
    """
    streams = rng.spawn(ds.Nt)
    noisy = [
        Experiment(e.u + spec_u.draw(g, e.u.shape), e.y + spec_y.draw(g, e.y.shape))
        for e, g in zip(ds.experiments, streams)
    ]
    return Dataset(tuple(noisy))


def generate_dataset(
    ss: StateSpace,
    Nt: int,
    N: int,
    L: int,
    x0_policy: str,
    rng: np.random.Generator,
    x0_halfwidth: float = 1.0,
    workers: int = 1,
) -> Dataset:
    """Generate Nt independent noiseless experiments of length N.

    Every input is verified persistently exciting of order L + n. Initial
    states are zero or drawn uniformly from a hypercube of the given
    half-width, per policy.
    """
    if Nt < 1:
        raise ValueError("Nt must be >= 1")
    if x0_policy not in ("zero", "random-bounded"):
        raise ValueError(f"unknown x0 policy {x0_policy!r}")
    order = L + ss.n
    if N < (ss.m + 1) * order - 1:
        raise ValueError(f"N={N} too short for excitation order L+n={order} with m={ss.m}; need N >= {(ss.m + 1) * order - 1}")
    streams = rng.spawn(Nt)

    def _one(i: int) -> Experiment:
        g = streams[i]
        if x0_policy == "zero":
            x0 = np.zeros(ss.n)
        else:
            x0 = g.uniform(-x0_halfwidth, x0_halfwidth, ss.n)
        return simulate(ss, x0, generate_pe_input(N, ss.m, order, g))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            exps = list(ex.map(_one, range(Nt)))
    else:
        exps = [_one(i) for i in range(Nt)]
    return Dataset(tuple(exps))


def random_system(n: int, m: int, p: int, rng: np.random.Generator, spectral_radius: float = 0.9) -> StateSpace:
    """Random state-space model with A rescaled to the given spectral radius."""
    A = rng.standard_normal((n, n))
    rho = float(np.max(np.abs(np.linalg.eigvals(A))))
    if rho > 0.0:
        A *= spectral_radius / rho
    return StateSpace(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), rng.standard_normal((p, m)))


def _fmt_matrix(a: np.ndarray) -> str:
    # 17 significant digits round-trip binary64 exactly
    return "[" + ",".join("[" + ",".join(f"{v:.17g}" for v in row) + "]" for row in a) + "]"


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset as JSON Lines: a meta header, then one experiment per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": {"Nt": ds.Nt, "N": ds.N, "m": ds.m, "p": ds.p}}) + "\n")
        for i, e in enumerate(ds.experiments):
            fh.write('{"i":%d,"u":%s,"y":%s}\n' % (i, _fmt_matrix(e.u), _fmt_matrix(e.y)))


def load_dataset(path) -> Dataset:
    """Read a dataset written by save_dataset."""
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if "meta" not in header:
            raise ValueError(f"{path}: missing meta header line")
        meta = header["meta"]
        exps = []
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            exps.append(Experiment(np.asarray(obj["u"], dtype=float), np.asarray(obj["y"], dtype=float)))
    ds = Dataset(tuple(exps))
    if ds.Nt != meta["Nt"] or ds.N != meta["N"] or ds.m != meta["m"] or ds.p != meta["p"]:
        raise ValueError(f"{path}: experiment lines disagree with meta header")
    return ds
