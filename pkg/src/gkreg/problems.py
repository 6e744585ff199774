"""Test problems, noise injection and the L-weighted relative error.

The 1-D generators discretize the classic Fredholm first-kind test kernels
(shaw, baart, gravity, deriv2, heat) as dense n x n matrices. ``b_true`` is
always ``A @ x_true`` so the discrete system is exactly consistent.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import toeplitz

from .operators import (
    LinearOperator,
    SparseBandedMatrix,
    dense_operator,
    first_derivative_operator,
    identity_operator,
    kron_separable_operator,
    kron_stack_operator,
)

PROBLEMS_1D = ("shaw", "baart", "gravity", "deriv2", "heat")


class UnknownProblemError(ValueError):
    pass


@dataclass
class ProblemInstance:
    A: LinearOperator
    b_true: np.ndarray
    b: np.ndarray
    x_true: Optional[np.ndarray]
    L: LinearOperator
    epsilon: float
    name: str
    seed: Optional[int] = None

    @property
    def noise_norm(self):
        return float(np.linalg.norm(self.b - self.b_true))


# ---------------------------------------------------------------------------
# 1-D kernels

def shaw(n):
    """Midpoint collocation of the Shaw optics kernel on [-pi/2, pi/2]^2."""
    if n % 2:
        raise ValueError("shaw requires even n")
    h = np.pi / n
    t = -np.pi / 2 + (np.arange(n) + 0.5) * h
    c = np.cos(t)
    s = np.sin(t)
    C = c[:, None] + c[None, :]
    # np.sinc(x) = sin(pi x)/(pi x) handles the removable singularity
    A = h * (C * np.sinc(s[:, None] + s[None, :])) ** 2
    A = 0.5 * (A + A.T)
    x = 2.0 * np.exp(-6.0 * (t - 0.8) ** 2) + np.exp(-2.0 * (t + 0.5) ** 2)
    return A, x


def baart(n):
    """Galerkin discretization of exp(s cos t), s in [0, pi/2], t in [0, pi].

    The s-integral over each cell is exact, the t-integral uses Simpson's rule.
    """
    if n % 2:
        raise ValueError("baart requires even n")
    hs = np.pi / (2 * n)
    ht = np.pi / n
    s_lo = np.arange(n) * hs
    t_nodes = np.arange(2 * n + 1) * (ht / 2)     # cell ends and midpoints
    cvals = np.cos(t_nodes)

    def s_integral(c):
        # int_{s_lo}^{s_lo+hs} exp(s c) ds, column per value of c
        c = np.asarray(c)
        safe = np.where(np.abs(c) < 1e-14, 1.0, c)
        val = np.exp(np.outer(s_lo, c)) * np.expm1(hs * safe) / safe
        return np.where(np.abs(c) < 1e-14, hs, val)

    F = s_integral(cvals)
    A = (ht / 6.0) * (F[:, 0:-1:2] + 4.0 * F[:, 1::2] + F[:, 2::2])
    t_edges = np.arange(n + 1) * ht
    x = (np.cos(t_edges[:-1]) - np.cos(t_edges[1:])) / ht   # cell means of sin t
    return A, x


def gravity(n, depth=0.25):
    """Midpoint rule for the 1-D gravity surveying kernel on [0, 1]."""
    h = 1.0 / n
    t = (np.arange(n) + 0.5) * h
    D = t[:, None] - t[None, :]
    A = h * depth / (depth**2 + D**2) ** 1.5
    x = np.sin(np.pi * t) + 0.5 * np.sin(2 * np.pi * t)
    return A, x


def deriv2(n):
    """Galerkin (orthonormal box functions) discretization of the Green's function
    of the second derivative on [0, 1]; solution x(t) = t."""
    h = 1.0 / n
    i = np.arange(1, n + 1, dtype=float)
    I, J = np.meshgrid(i, i, indexing="ij")
    lower = h**2 * (J - 0.5) * ((I - 0.5) * h - 1.0)    # entry (i, j), i > j
    A = np.tril(lower, -1)
    A = A + A.T
    A[np.diag_indices(n)] = h**2 * ((i**2 - i + 0.25) * h - (i - 2.0 / 3.0))
    x = h * np.sqrt(h) * (i - 0.5)
    return A, x


def heat(n, kappa=1.0):
    """Inverse heat equation: lower-triangular Toeplitz Volterra kernel on [0, 1]."""
    if n % 2:
        raise ValueError("heat requires even n")
    h = 1.0 / n
    t = (np.arange(n) + 0.5) * h
    c = h / (2.0 * kappa * np.sqrt(np.pi))
    d = c * t**-1.5 * np.exp(-1.0 / (4.0 * kappa**2 * t))
    A = toeplitz(d, np.r_[d[0], np.zeros(n - 1)])
    x = np.zeros(n)
    ti = np.arange(1, n // 2 + 1) * 20.0 / n
    x[: n // 2] = np.where(ti < 2, 0.75 * ti**2 / 4,
                           np.where(ti < 3, 0.75 + (ti - 2) * (3 - ti), 0.75 * np.exp(-(ti - 3) * 2)))
    return A, x


_GENERATORS = {"shaw": shaw, "baart": baart, "gravity": gravity, "deriv2": deriv2, "heat": heat}


def generate(name, n):
    """Return (A, b_true, x_true) with A a dense operator and b_true = A x_true."""
    if name not in _GENERATORS:
        raise UnknownProblemError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS_1D)}")
    if n < 8:
        raise ValueError("n must be >= 8")
    A, x = _GENERATORS[name](n)
    A_op = dense_operator(A, name=name)
    return A_op, A_op.forward(x), x


# ---------------------------------------------------------------------------
# 2-D separable blur

def gaussian_band(band, sigma):
    """Truncated Gaussian taps g_0..g_band scaled so the full (2 band + 1)-tap
    stencil sums to one; edge rows of the Toeplitz matrix then sum to < 1."""
    if band < 0:
        raise ValueError("band must be >= 0")
    if band == 0:
        return np.array([1.0])
    d = np.arange(band + 1, dtype=float)
    g = np.exp(-(d**2) / (2.0 * sigma**2)) if sigma > 0 else (d == 0).astype(float)
    return g / (g[0] + 2.0 * g[1:].sum())


def phantom_image(N):
    """Piecewise-constant N x N image: a bright rectangle, a dimmer square and a disk."""
    u = (np.arange(N) + 0.5) / N
    Y, X = np.meshgrid(u, u, indexing="ij")
    img = np.zeros((N, N))
    img[(X > 0.15) & (X < 0.55) & (Y > 0.2) & (Y < 0.45)] = 1.0
    img[(X > 0.6) & (X < 0.85) & (Y > 0.55) & (Y < 0.8)] = 0.5
    img[(X - 0.35) ** 2 + (Y - 0.7) ** 2 < 0.12**2] = 0.75
    return img


def generate_blur2d(N, band=None, sigma=2.0):
    """Separable Gaussian blur T kron T on N x N images; returns (A, b_true, x_true)."""
    if N < 8:
        raise ValueError("N must be >= 8")
    if band is None:
        band = min(N - 1, int(np.ceil(3 * sigma)))
    if band >= N:
        raise ValueError(f"band ({band}) must be < N ({N})")
    T = SparseBandedMatrix.banded_toeplitz(N, gaussian_band(band, sigma))
    A = kron_separable_operator(T, name=f"blur{N}")
    x = phantom_image(N).ravel(order="F")
    return A, A.forward(x), x


# ---------------------------------------------------------------------------
# noise, error metric, assembly

def add_noise(b_true, epsilon, seed=None):
    """b_true + e with e white Gaussian, scaled so ||e|| = epsilon ||b_true||."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    b_true = np.asarray(b_true, dtype=float)
    if epsilon == 0:
        return b_true.copy()
    bnorm = np.linalg.norm(b_true)
    if bnorm == 0:
        raise ValueError("b_true is zero")
    e0 = np.random.default_rng(seed).standard_normal(b_true.shape)
    return b_true + (epsilon * bnorm / np.linalg.norm(e0)) * e0


def relative_error(L: LinearOperator, x_reg, x_true):
    """||L (x_reg - x_true)|| / ||L x_true||."""
    x_reg = np.asarray(x_reg, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_reg.shape != x_true.shape:
        raise ValueError("x_reg and x_true differ in shape")
    denom = np.linalg.norm(L.forward(x_true))
    if denom == 0:
        raise ValueError("||L x_true|| = 0; relative error undefined")
    return float(np.linalg.norm(L.forward(x_reg - x_true)) / denom)


def regularization_operator(choice, n):
    if choice == "identity":
        return identity_operator(n)
    if choice == "d1":
        return first_derivative_operator(n)
    if choice == "d2d-kron":
        N = int(round(np.sqrt(n)))
        if N * N != n:
            raise ValueError(f"d2d-kron needs a square grid, got n={n}")
        return kron_stack_operator(N)
    raise ValueError(f"unknown L choice {choice!r}")


def make_problem(name, n, epsilon=1e-2, L="d1", seed=0, band=None, sigma=2.0) -> ProblemInstance:
    """Assemble a full instance. For ``name='blur'``, ``n`` is the image side N."""
    if name == "blur":
        A, b_true, x_true = generate_blur2d(n, band=band, sigma=sigma)
    else:
        A, b_true, x_true = generate(name, n)
    L_op = regularization_operator(L, A.cols) if isinstance(L, str) else L
    b = add_noise(b_true, epsilon, seed)
    return ProblemInstance(A, b_true, b, x_true, L_op, float(epsilon), name, seed)


# ---------------------------------------------------------------------------
# file layout: ASCII header line "GKREG-PROBLEM 1 <m> <n>\n", then little-endian
# float64 payload: A column-major (m*n), b (m), x_true (n)

_MAGIC = "GKREG-PROBLEM"


def save_problem(path, A, b, x_true):
    A = np.asarray(A, dtype="<f8")
    m, n = A.shape
    with open(path, "wb") as fh:
        fh.write(f"{_MAGIC} 1 {m} {n}\n".encode("ascii"))
        fh.write(A.tobytes(order="F"))
        fh.write(np.asarray(b, dtype="<f8").tobytes())
        fh.write(np.asarray(x_true, dtype="<f8").tobytes())


def load_problem(path):
    """Read (A, b, x_true) written by :func:`save_problem` or an external exporter."""
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    parts = raw[:nl].decode("ascii").split()
    if len(parts) != 4 or parts[0] != _MAGIC or parts[1] != "1":
        raise ValueError(f"{path}: not a {_MAGIC} v1 file")
    m, n = int(parts[2]), int(parts[3])
    payload = np.frombuffer(raw[nl + 1:], dtype="<f8")
    if payload.size != m * n + m + n:
        raise ValueError(f"{path}: payload has {payload.size} values, expected {m * n + m + n}")
    A = payload[: m * n].reshape((m, n), order="F").astype(float)
    b = payload[m * n: m * n + m].astype(float)
    x = payload[m * n + m:].astype(float)
    return A, b, x
