"""
Dense matrix/tensor helpers and the vectorization identities

Conventions used throughout the package:

* ``vec`` stacks columns (column-major, first index fastest). For tensors the
  first mode varies fastest. With this choice ``vec(A X B) = kron(B.T, A) vec(X)``.
* ``mode_unfold(x, i)`` puts mode ``i`` on the rows; the columns enumerate the
  remaining modes in row-major order (last mode fastest).
* Tucker factors follow ``A_i`` of shape ``(a_i, a_i')``: mode ``i`` of the
  input is contracted with the *first* index of ``A_i``.
"""
from functools import reduce
from typing import Any, Sequence, Tuple

import numpy as np

from app.utils.errors import InputError, ShapeError


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def as_array(value: Any, ndim: int = None, name: str = "array") -> np.ndarray:
    """Copy ``value`` into a read-only float64 array, rejecting NaN/Inf"""
    try:
        array = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name} is not a numeric array: {exc}") from exc
    if ndim is not None and array.ndim != ndim:
        raise ShapeError(f"{name} must have {ndim} dimension(s), got shape {array.shape}")
    if array.ndim == 0 or 0 in array.shape:
        raise ShapeError(f"{name} must be non-empty, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InputError(f"{name} contains NaN or Inf entries")
    return _freeze(array)


def as_matrix(value: Any, name: str = "matrix") -> np.ndarray:
    return as_array(value, ndim=2, name=name)


def as_vector(value: Any, name: str = "vector") -> np.ndarray:
    return as_array(value, ndim=1, name=name)


def as_tensor(value: Any, name: str = "tensor") -> np.ndarray:
    return as_array(value, name=name)


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization (first index fastest)"""
    return np.reshape(m, -1, order="F")


def unvec(v: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`vec` for a fixed shape"""
    v = np.asarray(v)
    if v.size != int(np.prod(shape)):
        raise ShapeError(f"cannot unvec {v.size} entries into shape {tuple(shape)}")
    return np.reshape(v, tuple(shape), order="F")


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two matrices"""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("kron expects matrices")
    return np.kron(a, b)


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    if not mats:
        raise ShapeError("kron_all needs at least one factor")
    return reduce(kron, mats)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Element-wise product; shapes must agree exactly (no broadcasting)"""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def mode_unfold(x: np.ndarray, mode: int) -> np.ndarray:
    x = np.asarray(x)
    return np.reshape(np.moveaxis(x, mode, 0), (x.shape[mode], -1))


def mode_fold(unfolded: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    full_shape = list(shape)
    mode_dim = full_shape.pop(mode)
    full_shape.insert(0, mode_dim)
    return np.moveaxis(np.reshape(unfolded, full_shape), 0, mode)


def mode_product(x: np.ndarray, a: np.ndarray, mode: int) -> np.ndarray:
    """Contract mode ``mode`` of ``x`` with the first index of ``a``"""
    x = np.asarray(x)
    if a.shape[0] != x.shape[mode]:
        raise ShapeError(
            f"mode {mode} has dimension {x.shape[mode]} but factor has {a.shape[0]} rows"
        )
    new_shape = list(x.shape)
    new_shape[mode] = a.shape[1]
    return mode_fold(a.T @ mode_unfold(x, mode), mode, new_shape)


def _check_factors(shape: Tuple[int, ...], mats: Sequence[np.ndarray]) -> None:
    if len(mats) != len(shape):
        raise ShapeError(f"tensor has {len(shape)} modes but {len(mats)} factor matrices were given")
    for i, (dim, a) in enumerate(zip(shape, mats)):
        if np.ndim(a) != 2:
            raise ShapeError(f"factor {i} is not a matrix")
        if a.shape[0] != dim:
            raise ShapeError(f"factor {i} has {a.shape[0]} rows, mode {i} has dimension {dim}")


def tucker_contract(x: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Tucker product [[x; A_1, ..., A_k]] contracting every mode at once"""
    x = np.asarray(x)
    _check_factors(x.shape, mats)
    letters = "abcdefghijklm"
    outputs = "nopqrstuvwxyz"
    if x.ndim > len(letters):
        raise ShapeError(f"tensors of order above {len(letters)} are not supported")
    in_idx = letters[: x.ndim]
    out_idx = outputs[: x.ndim]
    operands = ",".join(f"{i}{o}" for i, o in zip(in_idx, out_idx))
    return np.einsum(f"{in_idx},{operands}->{out_idx}", x, *mats)


def tucker_contract_sequential(x: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Same result as :func:`tucker_contract`, one mode at a time"""
    x = np.asarray(x)
    _check_factors(x.shape, mats)
    for mode, a in enumerate(mats):
        x = mode_product(x, a, mode)
    return x


def tucker_operator(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Matrix T with vec(tucker_contract(X, mats)) = T @ vec(X).

    Under column-major vec the last mode is slowest, so the factors are
    combined as ``kron(A_k.T, ..., A_1.T)``.
    """
    return kron_all([np.asarray(a).T for a in reversed(mats)])
