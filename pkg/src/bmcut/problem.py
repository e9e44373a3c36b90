"""Problem instances: symmetric zero-diagonal cost matrices with cached norms.

The objective <A, X> over matrices with unit diagonal only sees the symmetric
part of A, and zeroing the diagonal shifts it by the constant trace(A).  Every
construction path below therefore symmetrizes, strips the diagonal into
``trace_offset``, and caches the two norms the solver bounds depend on.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, ParseError, ValidationError


@dataclass(frozen=True)
class ProblemInstance:
    """Symmetric cost matrix with zero diagonal, row-accessible sparse storage.

    Immutable after construction; safe to share across concurrent solver runs.
    """

    n: int
    rows: sp.csr_array      # symmetric, zero diagonal, sorted column indices
    trace_offset: float     # trace of the symmetrized input, reported additively
    one_norm: float         # max_j sum_i |A_ij|
    l11_norm: float         # sum_ij |A_ij|

    def row(self, i: int):
        """Column indices and values of row i (the diagonal is never stored)."""
        lo, hi = self.rows.indptr[i], self.rows.indptr[i + 1]
        return self.rows.indices[lo:hi], self.rows.data[lo:hi]

    def matmat(self, dense: np.ndarray) -> np.ndarray:
        """A @ dense for an (n, k) array."""
        return self.rows @ dense

    def dense(self) -> np.ndarray:
        return self.rows.toarray()

    @property
    def nnz(self) -> int:
        return int(self.rows.nnz)

    def checksum(self) -> str:
        """SHA-256 over the canonical storage, for trace headers."""
        h = hashlib.sha256()
        h.update(np.int64(self.n).tobytes())
        h.update(np.asarray(self.rows.indptr, dtype="<i8").tobytes())
        h.update(np.asarray(self.rows.indices, dtype="<i8").tobytes())
        h.update(np.asarray(self.rows.data, dtype="<f8").tobytes())
        h.update(np.float64(self.trace_offset).tobytes())
        return h.hexdigest()


def _finish(sym: sp.csr_array | np.ndarray) -> ProblemInstance:
    """Build an instance from an exactly symmetric matrix (diagonal included).

    Strips the diagonal into trace_offset, drops explicit zeros (including
    cancellations produced by symmetrization), sorts column indices and caches
    the norms.
    """
    if sp.issparse(sym):
        coo = sp.coo_array(sym)
        offset = float(coo.diagonal().sum())
        keep = (coo.row != coo.col) & (coo.data != 0.0)
        mat = sp.coo_array(
            (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=coo.shape
        ).tocsr()
    else:
        arr = np.asarray(sym, dtype=np.float64)
        offset = float(np.trace(arr))
        i, j = np.nonzero(arr)
        keep = i != j
        mat = sp.coo_array(
            (arr[i[keep], j[keep]], (i[keep], j[keep])), shape=arr.shape
        ).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    n = mat.shape[0]
    col_abs = abs(mat).sum(axis=0)
    one_norm = float(col_abs.max()) if n else 0.0
    l11 = float(abs(mat.data).sum())
    return ProblemInstance(n=n, rows=mat, trace_offset=offset,
                           one_norm=one_norm, l11_norm=l11)


def preprocess(raw_matrix) -> ProblemInstance:
    """Symmetrize a square matrix, zero its diagonal, and cache norms.

    The returned instance stores (raw + raw.T)/2 off the diagonal;
    trace_offset records the trace removed from the diagonal.
    """
    arr = np.asarray(raw_matrix, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("matrix contains non-finite entries")
    sym = (arr + arr.T) * 0.5
    return _finish(sym)


def gen_gaussian(n: int, seed: int) -> ProblemInstance:
    """Random dense symmetric instance with entries (G_ij + G_ji)/n, G standard normal.

    The diagonal is zero and the draw is deterministic per seed.
    """
    if n < 2:
        raise ValidationError(f"gaussian instance needs n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, n))
    a = (g + g.T) / n
    np.fill_diagonal(a, 0.0)
    return _finish(a)


def _decode_pairs(ks: np.ndarray, n: int):
    """Map flat indices in [0, n(n-1)/2) to (i, j) with i < j, lexicographic."""
    starts = np.arange(n, dtype=np.int64) * (n - 1) - (
        np.arange(n, dtype=np.int64) * (np.arange(n, dtype=np.int64) - 1)
    ) // 2
    i = np.searchsorted(starts, ks, side="right") - 1
    j = i + 1 + (ks - starts[i])
    return i, j


def gen_erdos_renyi(n: int, edges: int, sign: int, seed: int) -> ProblemInstance:
    """Uniform simple graph on n nodes with exactly `edges` edges, weights sign*1.

    sign=-1 orients maximization of <A, X> toward the Max-Cut relaxation.
    """
    if n < 2:
        raise ValidationError(f"graph instance needs n >= 2, got {n}")
    if sign not in (1, -1):
        raise ValidationError(f"sign must be +1 or -1, got {sign}")
    m = n * (n - 1) // 2
    if not 1 <= edges <= m:
        raise ValidationError(f"edges must be in [1, {m}] for n={n}, got {edges}")
    rng = np.random.default_rng(seed)
    if edges <= m // 3:
        # sparse regime: rejection into a set stays uniform over edge subsets
        chosen: set[int] = set()
        while len(chosen) < edges:
            need = edges - len(chosen)
            for k in rng.integers(0, m, size=max(16, 2 * need)):
                chosen.add(int(k))
                if len(chosen) == edges:
                    break
        ks = np.fromiter(sorted(chosen), dtype=np.int64)
    else:
        ks = np.sort(rng.permutation(m)[:edges]).astype(np.int64)
    i, j = _decode_pairs(ks, n)
    w = np.full(edges, float(sign))
    mat = sp.coo_array(
        (np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
        shape=(n, n),
    ).tocsr()
    return _finish(mat)


def _load_edge_list(path: str) -> ProblemInstance:
    # a line "i j w" sets the symmetric entry {i, j} to w; duplicates
    # (either orientation) are summed in file order
    acc: dict[tuple[int, int], float] = {}
    nmax = 0
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 3:
                raise ParseError(f"{path}:{ln}: expected 'i j w', got {text!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
                w = float(parts[2])
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: {exc}") from None
            if i < 1 or j < 1:
                raise ParseError(f"{path}:{ln}: indices are 1-based, got {i} {j}")
            if not np.isfinite(w):
                raise ParseError(f"{path}:{ln}: non-finite weight {parts[2]}")
            key = (min(i, j) - 1, max(i, j) - 1)
            acc[key] = acc.get(key, 0.0) + w
            nmax = max(nmax, i, j)
    if nmax == 0:
        raise ParseError(f"{path}: no edges found")
    rows, cols, vals = [], [], []
    for (i, j), w in acc.items():
        rows.append(i)
        cols.append(j)
        vals.append(w)
        if i != j:
            rows.append(j)
            cols.append(i)
            vals.append(w)
    sym = sp.coo_array(
        (np.asarray(vals), (np.asarray(rows), np.asarray(cols))),
        shape=(nmax, nmax)).tocsr()
    return _finish(sym)


def _load_matrix_market(path: str) -> ProblemInstance:
    import scipy.io

    try:
        raw = scipy.io.mmread(path)
    except Exception as exc:
        raise ParseError(f"{path}: {exc}") from None
    if raw.shape[0] != raw.shape[1]:
        raise DimensionError(f"{path}: matrix is {raw.shape}, expected square")
    if sp.issparse(raw):
        csr = sp.csr_array(raw)
        csr.sum_duplicates()
        sym = (csr + csr.T) * 0.5
        return _finish(sym)
    return preprocess(np.asarray(raw))


def load_instance(path: str, format: str = "edge-list") -> ProblemInstance:
    """Load an instance file and route it through the preprocessing pipeline.

    Formats: "edge-list" (lines "i j w", 1-based, '#' comments, duplicates
    summed) and "matrix-market" (coordinate or array; a general header is
    symmetrized).
    """
    if format == "edge-list":
        return _load_edge_list(path)
    if format == "matrix-market":
        return _load_matrix_market(path)
    raise ValidationError(f"unknown instance format {format!r}")


def write_edge_list(instance: ProblemInstance, path: str) -> None:
    """Write the strict upper triangle as 1-based "i j w" lines.

    The trace offset has no edge-list representation and is dropped.
    """
    coo = sp.coo_array(sp.triu(instance.rows, k=1))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {instance.n} nodes, {coo.nnz} edges\n")
        for i, j, w in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {float(w)!r}\n")


def write_matrix_market(instance: ProblemInstance, path: str) -> None:
    import scipy.io

    scipy.io.mmwrite(path, sp.coo_matrix(instance.rows), symmetry="symmetric")
