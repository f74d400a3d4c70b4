"""Sparse third-order tensors and Kronecker index bookkeeping.

A :class:`SparseTensor3` ``T`` of dimension ``N`` represents the mode-1
matricization ``H`` with ``H (u kron v) = sum T[i, j, k] u[j] v[k] e_i``.
``H`` itself (``N x N^2``) is never formed densely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SparseTensor3",
    "IndexPermutation",
    "mode1_apply",
    "mode1_apply_pairs",
    "mode2_apply_pairs",
    "mode1_core_apply",
    "mode2_core_apply",
    "symmetrize",
    "commutation_apply",
    "commutation_permutation",
    "revised_kron_permutation",
]


@dataclass(frozen=True, eq=False)
class SparseTensor3:
    """Coordinate-format ``N x N x N`` tensor (0-based indices).

    Duplicate coordinates are summed and exact zeros dropped at construction;
    entries are kept in lexicographic ``(i, j, k)`` order.
    """

    dim: int
    i: np.ndarray
    j: np.ndarray
    k: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        N = int(self.dim)
        i, j, k = (np.asarray(a, dtype=np.int64).ravel() for a in (self.i, self.j, self.k))
        v = np.asarray(self.vals, dtype=float).ravel()
        if not (len(i) == len(j) == len(k) == len(v)):
            raise ValueError("coordinate arrays must have equal length")
        if len(v) and (min(i.min(), j.min(), k.min()) < 0 or max(i.max(), j.max(), k.max()) >= N):
            raise ValueError("tensor index out of range")
        lin = (i * N + j) * N + k
        uniq, inv = np.unique(lin, return_inverse=True)
        summed = np.bincount(inv, v, len(uniq))
        keep = summed != 0.0
        uniq, summed = uniq[keep], summed[keep]
        k_, rest = uniq % N, uniq // N
        j_, i_ = rest % N, rest // N
        for name, arr in (("i", i_), ("j", j_), ("k", k_), ("vals", summed)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "dim", N)

    @classmethod
    def from_entries(cls, dim, entries):
        """Build from an iterable of ``(i, j, k, value)`` with 0-based indices."""
        entries = list(entries)
        if not entries:
            return cls.zeros(dim)
        i, j, k, v = zip(*entries)
        return cls(dim, i, j, k, v)

    @classmethod
    def zeros(cls, dim):
        e = np.zeros(0, dtype=np.int64)
        return cls(dim, e, e, e, np.zeros(0))

    @property
    def nnz(self) -> int:
        return len(self.vals)

    def norm(self) -> float:
        """Frobenius norm (equals the 2-norm bound used for ``H``)."""
        return float(np.linalg.norm(self.vals))

    def to_dense(self) -> np.ndarray:
        N = self.dim
        if N > 64:
            raise ValueError("refusing to densify a tensor with dim > 64")
        out = np.zeros((N, N, N))
        out[self.i, self.j, self.k] = self.vals
        return out

    def matricize(self, mode: int = 1) -> sp.csr_matrix:
        """Sparse ``N x N^2`` unfolding.

        Mode 1 uses column ``j*N + k`` (so that ``H @ kron(u, v)`` works),
        mode 2 puts index ``j`` on the rows and ``i*N + k`` on the columns,
        mode 3 puts ``k`` on the rows and ``i*N + j`` on the columns.
        """
        N = self.dim
        rows, a, b = {1: (self.i, self.j, self.k), 2: (self.j, self.i, self.k), 3: (self.k, self.i, self.j)}[mode]
        return sp.csr_matrix((self.vals, (rows, a * N + b)), shape=(N, N * N))

    def transpose23(self) -> "SparseTensor3":
        return SparseTensor3(self.dim, self.i, self.k, self.j, self.vals)

    def scale_rows(self, s) -> "SparseTensor3":
        """Tensor with first-mode slice ``i`` multiplied by ``s[i]``."""
        s = np.asarray(s, dtype=float)
        return SparseTensor3(self.dim, self.i, self.j, self.k, self.vals * s[self.i])

    def is_symmetric(self, rtol: float = 0.0) -> bool:
        other = self.transpose23()
        if other.nnz != self.nnz:
            return False
        same_idx = (np.array_equal(self.i, other.i) and np.array_equal(self.j, other.j)
                    and np.array_equal(self.k, other.k))
        return same_idx and np.allclose(self.vals, other.vals, rtol=rtol, atol=0.0)

    def dump(self, path) -> None:
        """Write the coordinate text format ``i j k value`` (1-based)."""
        with open(path, "w") as fh:
            fh.write(f"# dim {self.dim}\n")
            for a, b, c, v in zip(self.i, self.j, self.k, self.vals):
                fh.write(f"{a + 1} {b + 1} {c + 1} {float(v)!r}\n")

    @classmethod
    def load(cls, path, dim=None):
        entries = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    parts = line[1:].split()
                    if len(parts) == 2 and parts[0] == "dim" and dim is None:
                        dim = int(parts[1])
                    continue
                a, b, c, v = line.split()
                entries.append((int(a) - 1, int(b) - 1, int(c) - 1, float(v)))
        if dim is None:
            raise ValueError("tensor dimension unknown")
        return cls.from_entries(dim, entries)


def _check_vec(T, x, name):
    x = np.asarray(x)
    if x.shape[0] != T.dim:
        raise ValueError(f"{name} has leading dimension {x.shape[0]}, tensor dim is {T.dim}")
    return x


def mode1_apply(T: SparseTensor3, u, v) -> np.ndarray:
    """``H (u kron v)``; O(nnz)."""
    u = _check_vec(T, u, "u")
    v = _check_vec(T, v, "v")
    w = T.vals * u[T.j] * v[T.k]
    if np.iscomplexobj(w):
        return np.bincount(T.i, w.real, T.dim) + 1j * np.bincount(T.i, w.imag, T.dim)
    return np.bincount(T.i, w, T.dim)


def _pairs(out_idx, left_idx, right_idx, vals, N, L, R, chunk):
    """out[o, a*b_cols + b] = sum_e vals[e] L[left[e], a] R[right[e], b]."""
    a, b = L.shape[1], R.shape[1]
    dtype = np.result_type(L.dtype, R.dtype, float)
    out = np.zeros((N, a, b), dtype=dtype)
    # Contract the right factor first through a sparse (N*N) x N matrix.
    S = sp.csr_matrix((vals, (out_idx * N + left_idx, right_idx)), shape=(N * N, N))
    for s in range(0, b, chunk):
        Y = (S @ R[:, s:s + chunk]).reshape(N, N, -1)
        out[:, :, s:s + chunk] = np.einsum("ja,ijb->iab", L, Y, optimize=True)
    return out.reshape(N, a * b)


def mode1_apply_pairs(T: SparseTensor3, Left, Right, *, chunk: int = 64) -> np.ndarray:
    """``H (Left kron Right)`` as an ``N x (a*b)`` matrix."""
    L = np.atleast_2d(_check_vec(T, Left, "Left").T).T
    R = np.atleast_2d(_check_vec(T, Right, "Right").T).T
    return _pairs(T.i, T.j, T.k, T.vals, T.dim, L, R, chunk)


def mode2_apply_pairs(T: SparseTensor3, Left, Right, *, chunk: int = 64) -> np.ndarray:
    """Mode-2 unfolding times ``Left kron Right``.

    Column ``alpha*b + beta`` has row-``j`` entry
    ``sum T[i, j, k] Left[i, alpha] Right[k, beta]``.
    """
    L = np.atleast_2d(_check_vec(T, Left, "Left").T).T
    R = np.atleast_2d(_check_vec(T, Right, "Right").T).T
    return _pairs(T.j, T.i, T.k, T.vals, T.dim, L, R, chunk)


def _core(out_idx, left_idx, right_idx, vals, N, L, core, R):
    # out[o, c] = sum_e vals[e] sum_{a,b} L[left_e, a] core[a, c, b] R[right_e, b]
    a, c, b = core.shape
    X = L[left_idx] @ core.reshape(a, c * b)                # nnz x (c*b)
    X = np.einsum("ecb,eb->ec", X.reshape(-1, c, b), R[right_idx]) * vals[:, None]
    out = np.zeros((N, c), dtype=X.dtype)
    np.add.at(out, out_idx, X)
    return out


def mode1_core_apply(T: SparseTensor3, Left, core, Right) -> np.ndarray:
    """``H (Left kron Right) G^T`` where ``G[c, a*b + beta] = core[c, a, beta]``.

    ``core`` has shape ``(c, a, b)``; returns ``N x c``. Cost is
    O(nnz * a * b * c) without forming ``H (Left kron Right)``.
    """
    core = np.asarray(core)
    return _core(T.i, T.j, T.k, T.vals, T.dim, np.asarray(Left), core.transpose(1, 0, 2), np.asarray(Right))


def mode2_core_apply(T: SparseTensor3, Left, core, Right) -> np.ndarray:
    """Mode-2 analogue of :func:`mode1_core_apply`: the output index is ``j``
    and ``Left``/``Right`` contract against tensor modes 1 and 3."""
    core = np.asarray(core)
    return _core(T.j, T.i, T.k, T.vals, T.dim, np.asarray(Left), core.transpose(1, 0, 2), np.asarray(Right))


def symmetrize(T: SparseTensor3) -> SparseTensor3:
    """Average over modes 2 and 3: ``S[i,j,k] = (T[i,j,k] + T[i,k,j]) / 2``."""
    return SparseTensor3(
        T.dim,
        np.concatenate([T.i, T.i]),
        np.concatenate([T.j, T.k]),
        np.concatenate([T.k, T.j]),
        np.concatenate([T.vals, T.vals]) * 0.5,
    )


@dataclass(frozen=True, eq=False)
class IndexPermutation:
    """Permutation of ``0..size-1`` applied as ``apply(x)[t] = x[perm[t]]``."""

    perm: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.perm, dtype=np.int64)
        if not np.array_equal(np.sort(p), np.arange(len(p))):
            raise ValueError("not a bijection")
        p.setflags(write=False)
        object.__setattr__(self, "perm", p)

    @property
    def size(self) -> int:
        return len(self.perm)

    def apply(self, x):
        return np.asarray(x)[self.perm]

    def apply_inverse(self, x):
        x = np.asarray(x)
        out = np.empty_like(x)
        out[self.perm] = x
        return out

    def inverse(self) -> "IndexPermutation":
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.size)
        return IndexPermutation(inv)

    def compose(self, other: "IndexPermutation") -> "IndexPermutation":
        """Permutation equivalent to ``self.apply(other.apply(x))``."""
        return IndexPermutation(other.perm[self.perm])


def commutation_permutation(n: int) -> IndexPermutation:
    """``S`` with ``S (nu kron rho) = rho kron nu`` for ``nu, rho`` of length n."""
    t = np.arange(n * n)
    b, a = divmod(t, n)    # output slot t = b*n + a holds nu_a * rho_b
    return IndexPermutation(a * n + b)


def commutation_apply(n: int, w) -> np.ndarray:
    w = np.asarray(w)
    if w.shape[0] != n * n:
        raise ValueError(f"vector length {w.shape[0]} is not {n}^2")
    return commutation_permutation(n).apply(w)


def revised_kron_permutation(n: int) -> IndexPermutation:
    """Map from ``q kron q`` to the block-revised product of the lifting.

    With ``q = [q1; q2; q3; q4]`` (blocks of length n) the revised product is
    ``[q_a (x) q]_a`` with ``q_a (x) q = [q_a kron q_b]_b``; ``apply`` takes
    the standard product to the revised one.
    """
    N = 4 * n
    t = np.arange(N * N)
    a, rest = divmod(t, 4 * n * n)
    b, rest = divmod(rest, n * n)
    x, y = divmod(rest, n)
    return IndexPermutation((a * n + x) * N + (b * n + y))
