"""Dense kernels and hand-written gradient rules for the SIREN graph.

Matrices are plain 2-D ``numpy.ndarray`` objects. Storage defaults to
float32; pass float64 arrays in to get float64 results (used by the
gradient checks). Every op preserves the dtype of its inputs.

Reductions go through numpy/BLAS with a fixed thread count, so results
are reproducible run to run as long as the thread count is unchanged.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32


class DimensionError(ValueError):
    """Raised when operand shapes do not conform."""


def as_tensor(x, dtype=None, name: str = "tensor") -> np.ndarray:
    """Validate ``x`` as a finite 2-D matrix and return it as an array.

    ``dtype`` defaults to the input's floating dtype, or float32 for
    integer / list input.
    """
    arr = np.asarray(x)
    if dtype is None:
        dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else DEFAULT_DTYPE
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if arr.ndim != 2:
        raise DimensionError(f"{name}: expected 2-D matrix, got shape {arr.shape}")
    check_finite(arr, name)
    return arr


def check_finite(arr: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise FloatingPointError(f"{name}: {bad} non-finite entries")


class RngStream:
    """Seeded random stream on the Philox-4x64 counter-based generator.

    Philox output depends only on (key, counter), so a given seed yields
    the same draws on every platform. Normal draws use numpy's ziggurat.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def uniform(self, low=0.0, high=1.0, size=None, dtype=DEFAULT_DTYPE):
        # draw in float64 then cast so float32/float64 modes see the same sequence
        return np.asarray(self._gen.uniform(low, high, size)).astype(dtype)

    def normal(self, size=None, dtype=DEFAULT_DTYPE):
        return np.asarray(self._gen.standard_normal(size)).astype(dtype)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        # Generator.permutation is a Fisher-Yates shuffle
        return self._gen.permutation(n)

    def spawn(self, offset: int) -> "RngStream":
        """Independent stream for sub-task ``offset`` (seed xor offset)."""
        return RngStream(self.seed ^ int(offset))

    def get_state(self) -> dict:
        return self._gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self._gen.bit_generator.state = state


def linear_forward(W: np.ndarray, b: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Affine map ``Y = X @ W.T + b`` over a batch of row vectors."""
    out_dim, in_dim = W.shape
    if X.ndim != 2 or X.shape[1] != in_dim or b.shape != (out_dim,):
        raise DimensionError(
            f"linear_forward: W{W.shape}, b{b.shape}, X{X.shape} do not conform"
        )
    return X @ W.T + b


def linear_backward(W: np.ndarray, X: np.ndarray, dY: np.ndarray):
    """Return ``(dW, db, dX)`` for ``Y = X @ W.T + b``."""
    if X.ndim != 2 or dY.ndim != 2 or X.shape[0] != dY.shape[0] \
            or X.shape[1] != W.shape[1] or dY.shape[1] != W.shape[0]:
        raise DimensionError(
            f"linear_backward: W{W.shape}, X{X.shape}, dY{dY.shape} do not conform"
        )
    dW = dY.T @ X
    db = dY.sum(axis=0)
    dX = dY @ W
    return dW, db, dX


def sine_forward(omega0: float, Z: np.ndarray) -> np.ndarray:
    """Elementwise ``sin(omega0 * Z)``."""
    if not omega0 > 0:
        raise ValueError(f"omega0 must be positive, got {omega0}")
    return np.sin(Z.dtype.type(omega0) * Z)


def sine_backward(omega0: float, Z: np.ndarray, dA: np.ndarray) -> np.ndarray:
    if Z.shape != dA.shape:
        raise DimensionError(f"sine_backward: Z{Z.shape} vs dA{dA.shape}")
    w = Z.dtype.type(omega0)
    return dA * (w * np.cos(w * Z))


def mse_value_and_grad(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements and its gradient w.r.t. ``pred``."""
    if pred.shape != target.shape:
        raise DimensionError(f"mse: pred{pred.shape} vs target{target.shape}")
    diff = pred - target
    n = diff.size
    loss = float(np.mean(diff * diff, dtype=np.float64))
    return loss, diff * diff.dtype.type(2.0 / n)


def l2_value_and_grad(z: np.ndarray, lam: float):
    """``lam * sum(z**2)`` and its gradient ``2 * lam * z``."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    z = np.asarray(z)
    penalty = lam * float(np.sum(z.astype(np.float64) ** 2))
    return penalty, z * z.dtype.type(2.0 * lam)
