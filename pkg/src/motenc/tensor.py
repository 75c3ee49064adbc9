"""
Tensor Core
===========
Dense float64 arrays with explicit shapes, and the seeded random source used
by every other module.

A ``Tensor`` is a C-contiguous ``numpy.ndarray`` of dtype float64 with 1 to 4
dimensions. No broadcasting happens behind the caller's back: operations
check shapes and raise ``ShapeError`` naming both operands.
"""

import numpy as np

from motenc.errors import ParameterError, ShapeError

Tensor = np.ndarray

MAX_DIMS = 4


def as_tensor(values, name="tensor"):
    """
    Convert ``values`` to a validated float64 tensor.

    Args:
        values (array-like): Input data
        name (str): Label used in error messages

    Returns:
        Tensor: C-contiguous float64 array

    Raises:
        ShapeError: If the array has 0 or more than 4 dimensions, or an empty axis
    """
    array = np.ascontiguousarray(values, dtype=np.float64)
    if not 1 <= array.ndim <= MAX_DIMS:
        raise ShapeError(f"{name} must have 1-{MAX_DIMS} dimensions", array.shape)
    if min(array.shape) < 1:
        raise ShapeError(f"{name} has an empty axis", array.shape)
    return array


def check_same_shape(a, b, what="operands"):
    """Raise ``ShapeError`` unless ``a`` and ``b`` have identical shapes."""
    if a.shape != b.shape:
        raise ShapeError(f"{what} differ in shape", a.shape, b.shape)


def matmul(a, b):
    """
    Matrix product of two 2-D tensors.

    Args:
        a (Tensor): M x K
        b (Tensor): K x N

    Returns:
        Tensor: M x N product
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul needs (M x K) @ (K x N)", a.shape, b.shape)
    return a @ b


class SeededRng:
    """
    Deterministic random source.

    Wraps ``numpy.random.Generator`` over PCG64 so that one 64-bit seed fixes
    the whole sample stream. Not shareable between threads: give each owner
    its own instance (see ``spawn``).
    """

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self._generator = np.random.Generator(np.random.PCG64(seed))

    @classmethod
    def derive(cls, seed, *keys):
        """
        Build an independent stream from a base seed and integer keys.

        Used to give every generated recording (action, index) its own stream.
        """
        sequence = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
        return cls(int(sequence.generate_state(1, dtype=np.uint64)[0]))

    def spawn(self, key):
        """Child stream keyed by ``key``; the parent stream is not advanced."""
        return SeededRng.derive(self.seed, key)

    def normal(self, mean, std, size):
        return self._generator.normal(mean, std, size)

    def uniform(self, low, high, size=None):
        return self._generator.uniform(low, high, size)

    def random(self, size):
        return self._generator.random(size)

    def permutation(self, n):
        return self._generator.permutation(n)

    def choice(self, n, size, replace=False):
        return self._generator.choice(n, size=size, replace=replace)

    def get_state(self):
        """Bit-generator state, JSON-serializable."""
        return self._generator.bit_generator.state

    def set_state(self, state):
        self._generator.bit_generator.state = state


def sample_sparse_gaussian(rng, fan_in, fan_out, nonzeros_per_unit, std=1.0):
    """
    Sparse Gaussian weight matrix.

    Every column (one output unit) gets exactly ``nonzeros_per_unit`` nonzero
    entries at rows drawn uniformly without replacement; their values are
    N(0, std^2). All other entries are exactly zero.

    Args:
        rng (SeededRng): Random source
        fan_in (int): Number of rows
        fan_out (int): Number of columns
        nonzeros_per_unit (int): Nonzeros per column, 1..fan_in
        std (float): Standard deviation of the nonzero values

    Returns:
        Tensor: fan_in x fan_out weights
    """
    if fan_in < 1 or fan_out < 1:
        raise ParameterError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    if not 1 <= nonzeros_per_unit <= fan_in:
        raise ParameterError(
            f"nonzeros_per_unit must lie in [1, {fan_in}], got {nonzeros_per_unit}"
        )
    if std <= 0:
        raise ParameterError(f"std must be positive, got {std}")

    weights = np.zeros((fan_in, fan_out), dtype=np.float64)
    for column in range(fan_out):
        rows = rng.choice(fan_in, nonzeros_per_unit, replace=False)
        weights[rows, column] = rng.normal(0.0, std, nonzeros_per_unit)
    return weights


def sample_masked_sparse_gaussian(rng, mask, nonzeros_per_unit, std=1.0):
    """
    Sparse Gaussian init restricted to the allowed positions of ``mask``.

    Each column draws ``min(nonzeros_per_unit, allowed rows)`` nonzeros among
    the rows where the mask is 1, so no unit starts without inputs.
    """
    fan_in, fan_out = mask.shape
    weights = np.zeros((fan_in, fan_out), dtype=np.float64)
    for column in range(fan_out):
        allowed = np.flatnonzero(mask[:, column])
        if allowed.size == 0:
            continue
        count = min(nonzeros_per_unit, allowed.size)
        picks = allowed[rng.choice(allowed.size, count, replace=False)]
        weights[picks, column] = rng.normal(0.0, std, count)
    return weights
