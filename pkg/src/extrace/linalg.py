"""Dense complex linear algebra primitives shared by the trace engine.

Matrices are plain ``numpy.ndarray`` of dtype complex128 in row-major
order.  Everything here is a pure function over immutable inputs; the
only stateful object is the caller-supplied RNG seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LinalgError",
    "Partition",
    "PartitionedMap",
    "adjoint",
    "as_matrix",
    "classify",
    "direct_sum",
    "matrix_from_literal",
    "matrix_to_literal",
    "operator_norm",
    "random_contraction",
    "random_isometry",
    "random_unitary",
    "swap_matrix",
]

DEFAULT_TOL = 1e-9

# Full SVD below this dimension; power iteration on m^H m above.
_SVD_DIM_CAP = 64


class LinalgError(ValueError):
    """Raised on malformed matrices, unknown labels or non-convergence."""


def as_matrix(data) -> np.ndarray:
    """Coerce to a 2-D complex matrix, rejecting NaN/Inf entries."""
    m = np.asarray(data, dtype=np.complex128)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise LinalgError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if m.size and not np.all(np.isfinite(m)):
        raise LinalgError("matrix contains non-finite entries")
    return m


def adjoint(m: np.ndarray) -> np.ndarray:
    return np.conj(m.T)


def operator_norm(m: np.ndarray, *, max_iter: int = 10_000, tol: float = 1e-12) -> float:
    """Largest singular value.

    Uses full SVD up to 64 dimensions and power iteration on m^H m above
    that, so the same entry point serves both test-scale exactness and
    larger inputs.
    """
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    if max(m.shape) <= _SVD_DIM_CAP:
        return float(np.linalg.norm(m, 2))
    gram = adjoint(m) @ m
    rng = np.random.default_rng(0)
    v = rng.standard_normal(gram.shape[0]) + 1j * rng.standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        w /= nw
        lam_new = float(np.real(np.vdot(w, gram @ w)))
        residual = np.linalg.norm(gram @ w - lam_new * w)
        v = w
        lam = lam_new
        if residual <= tol * max(lam, 1.0):
            return float(np.sqrt(max(lam, 0.0)))
    raise LinalgError(
        f"power iteration did not converge after {max_iter} steps "
        f"(residual {residual:.3e})"
    )


def classify(m: np.ndarray, tol: float = DEFAULT_TOL) -> str:
    """Classify into strict_contraction / contraction_boundary / isometry /
    unitary / expansion, with precedence unitary > isometry > the rest."""
    if tol <= 0:
        raise LinalgError("tol must be positive")
    m = np.asarray(m)
    rows, cols = m.shape
    ident = np.eye(cols)
    if operator_norm(adjoint(m) @ m - ident) <= tol:
        if rows == cols and operator_norm(m @ adjoint(m) - ident) <= tol:
            return "unitary"
        return "isometry"
    norm = operator_norm(m)
    if norm <= 1.0 + tol:
        if norm < 1.0 - tol:
            return "strict_contraction"
        return "contraction_boundary"
    return "expansion"


def is_contraction(m: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    return classify(m, tol) != "expansion"


def direct_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]), dtype=np.complex128)
    out[: a.shape[0], : a.shape[1]] = a
    out[a.shape[0] :, a.shape[1] :] = b
    return out


def swap_matrix(n: int, m: int) -> np.ndarray:
    """The braiding C^n (+) C^m -> C^m (+) C^n."""
    out = np.zeros((n + m, n + m), dtype=np.complex128)
    out[:m, n:] = np.eye(m)
    out[m:, :n] = np.eye(n)
    return out


@dataclass(frozen=True)
class Partition:
    """Named split of a dimension into consecutive blocks.

    Zero-sized blocks are legal; they model the zero object and show up
    when tracing over a trivial loop.
    """

    names: tuple[str, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.names) != len(self.sizes):
            raise LinalgError("partition names and sizes differ in length")
        if len(set(self.names)) != len(self.names):
            raise LinalgError("partition names must be distinct")
        if any(s < 0 for s in self.sizes):
            raise LinalgError("partition sizes must be nonnegative")

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def index(self, label: str) -> int:
        try:
            return self.names.index(label)
        except ValueError:
            raise LinalgError(f"unknown block label {label!r}") from None

    def span(self, label: str) -> tuple[int, int]:
        """Half-open index range of the named block."""
        i = self.index(label)
        start = sum(self.sizes[:i])
        return start, start + self.sizes[i]

    def size(self, label: str) -> int:
        return self.sizes[self.index(label)]

    def without(self, label: str) -> "Partition":
        i = self.index(label)
        return Partition(
            self.names[:i] + self.names[i + 1 :], self.sizes[:i] + self.sizes[i + 1 :]
        )

    def to_json(self) -> dict:
        return {"names": list(self.names), "sizes": list(self.sizes)}

    @classmethod
    def from_json(cls, obj) -> "Partition":
        return cls(tuple(obj["names"]), tuple(obj["sizes"]))


@dataclass(frozen=True)
class PartitionedMap:
    """A matrix together with named row/column block structure."""

    matrix: np.ndarray
    row_partition: Partition
    col_partition: Partition

    def __post_init__(self):
        m = as_matrix(self.matrix)
        object.__setattr__(self, "matrix", m)
        if m.shape[0] != self.row_partition.total:
            raise LinalgError(
                f"matrix has {m.shape[0]} rows but row partition totals "
                f"{self.row_partition.total}"
            )
        if m.shape[1] != self.col_partition.total:
            raise LinalgError(
                f"matrix has {m.shape[1]} cols but col partition totals "
                f"{self.col_partition.total}"
            )

    def block(self, row_label: str, col_label: str) -> np.ndarray:
        r0, r1 = self.row_partition.span(row_label)
        c0, c1 = self.col_partition.span(col_label)
        return self.matrix[r0:r1, c0:c1]

    def to_json(self) -> dict:
        return {
            "matrix": matrix_to_literal(self.matrix),
            "row_partition": self.row_partition.to_json(),
            "col_partition": self.col_partition.to_json(),
        }

    @classmethod
    def from_json(cls, obj) -> "PartitionedMap":
        return cls(
            matrix_from_literal(obj["matrix"]),
            Partition.from_json(obj["row_partition"]),
            Partition.from_json(obj["col_partition"]),
        )


def two_block(matrix, loop_dim: int, *, body="A", out="B", loop="U") -> PartitionedMap:
    """Partition a square-on-the-loop matrix into (body, loop) blocks,
    the loop block taking the trailing ``loop_dim`` rows and columns."""
    m = as_matrix(matrix)
    rows, cols = m.shape
    if loop_dim < 0 or loop_dim > min(rows, cols):
        raise LinalgError(f"loop dimension {loop_dim} does not fit shape {m.shape}")
    return PartitionedMap(
        m,
        Partition((out, loop), (rows - loop_dim, loop_dim)),
        Partition((body, loop), (cols - loop_dim, loop_dim)),
    )


def random_unitary(n: int, seed) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian matrix."""
    if n < 1:
        raise LinalgError("dimension must be >= 1")
    rng = _rng(seed)
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_isometry(rows: int, cols: int, seed) -> np.ndarray:
    if rows < cols:
        raise LinalgError("an isometry needs rows >= cols")
    return random_unitary(rows, seed)[:, :cols]


def random_contraction(rows: int, cols: int, seed) -> np.ndarray:
    """Gaussian matrix rescaled to a uniformly drawn operator norm in [0, 1]."""
    if rows < 1 or cols < 1:
        raise LinalgError("dimensions must be >= 1")
    rng = _rng(seed)
    z = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    target = rng.uniform(0.0, 1.0)
    norm = operator_norm(z)
    if norm == 0.0:
        return z
    return z * (target / norm)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# Matrix literal format: JSON array-of-arrays of [re, im] pairs.

def matrix_to_literal(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=np.complex128)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def matrix_from_literal(obj) -> np.ndarray:
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, list):
        raise LinalgError("matrix literal must be a JSON array of rows")
    rows = []
    width = None
    for row in obj:
        if not isinstance(row, list):
            raise LinalgError("matrix literal row must be an array")
        entries = []
        for entry in row:
            if not (isinstance(entry, list) and len(entry) == 2):
                raise LinalgError("matrix entries must be [re, im] pairs")
            entries.append(complex(float(entry[0]), float(entry[1])))
        if width is None:
            width = len(entries)
        elif len(entries) != width:
            raise LinalgError("ragged matrix literal")
        rows.append(entries)
    if not rows:
        return np.zeros((0, 0), dtype=np.complex128)
    return as_matrix(rows)
