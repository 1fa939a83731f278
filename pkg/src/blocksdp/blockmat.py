"""Block-sparse symmetric cost matrices.

The cost matrix of the solver is a dn x dn symmetric matrix built from
d x d blocks with all diagonal blocks equal to zero.  Only the upper
off-diagonal blocks (i < j) are stored; querying block (j, i) returns the
transpose of the stored block, so the assembled matrix is symmetric by
construction.

Text format (BSM):

    BSM d n m
    i j b11 b12 ... bdd

with m data lines, 1-based indices i < j, and the d x d block in row-major
order.  Matrix Market coordinate files are accepted for d = 1.
"""

from __future__ import annotations

import numpy as np


class ParseError(ValueError):
    """Malformed instance file; message carries path and line number."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


def nuclear_norm(M) -> float:
    """Sum of singular values of M (zero for an empty matrix)."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False).sum())


class BlockSparseSym:
    """Symmetric dn x dn matrix with zero diagonal blocks, stored blockwise.

    Blocks are keyed by the ordered pair (i, j) with i < j; the (j, i)
    block is implied as the transpose.  Instances are immutable after
    construction and safe to share across threads for reads.
    """

    def __init__(self, d: int, n: int, blocks: dict):
        if d < 1 or n < 1:
            raise ValueError(f"invalid dimensions d={d}, n={n}")
        self.d = int(d)
        self.n = int(n)
        store = {}
        for (i, j), B in blocks.items():
            if not (0 <= i < j < n):
                raise ValueError(f"block key ({i},{j}) is not 0 <= i < j < n={n}")
            B = np.array(B, dtype=float)
            if B.shape != (d, d):
                raise ValueError(f"block ({i},{j}) has shape {B.shape}, expected ({d},{d})")
            if not np.isfinite(B).all():
                raise ValueError(f"block ({i},{j}) has non-finite entries")
            if B.any():
                store[(i, j)] = B
        self.blocks = store
        adjacency = {i: [] for i in range(n)}
        for (i, j) in store:
            adjacency[i].append(j)
            adjacency[j].append(i)
        self.adjacency = {i: sorted(v) for i, v in adjacency.items()}
        self._col_nuclear = None  # lazy, immutable afterwards

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    def has_block(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.blocks

    def block(self, i: int, j: int) -> np.ndarray:
        """Return Q_[i,j]; the stored block, its transpose, or zeros.

        Returned arrays may alias internal storage and must not be written.
        """
        if i == j:
            return np.zeros((self.d, self.d))
        if i < j:
            B = self.blocks.get((i, j))
            return B if B is not None else np.zeros((self.d, self.d))
        B = self.blocks.get((j, i))
        return B.T if B is not None else np.zeros((self.d, self.d))

    def pairs(self):
        """Iterate over (i, j, block) for the stored pairs, i < j."""
        for (i, j), B in self.blocks.items():
            yield i, j, B

    def to_dense(self) -> np.ndarray:
        d = self.d
        full = np.zeros((d * self.n, d * self.n))
        for i, j, B in self.pairs():
            full[i * d:(i + 1) * d, j * d:(j + 1) * d] = B
            full[j * d:(j + 1) * d, i * d:(i + 1) * d] = B.T
        return full

    def frobenius_norm(self) -> float:
        sq = sum(float(np.sum(B * B)) for B in self.blocks.values())
        return float(np.sqrt(2.0 * sq))

    def column_nuclear_sums(self) -> np.ndarray:
        """Per-column sums of block nuclear norms, computed once and cached."""
        if self._col_nuclear is None:
            sums = np.zeros(self.n)
            for i, j, B in self.pairs():
                nn = nuclear_norm(B)
                sums[i] += nn
                sums[j] += nn
            self._col_nuclear = sums
        return self._col_nuclear

    def c1(self) -> float:
        """max_i of the column sums of off-diagonal block nuclear norms."""
        sums = self.column_nuclear_sums()
        return float(sums.max()) if self.n else 0.0

    def c2(self) -> float:
        """Sum of block nuclear norms over all ordered pairs i != j."""
        return float(self.column_nuclear_sums().sum())


def preprocess(Qraw: np.ndarray, d: int):
    """Symmetrize a dense dn x dn cost matrix and strip its diagonal blocks.

    Returns (Q, offset) with Q holding the blocks 0.5*(Qraw_[i,j] + Qraw_[j,i]^T)
    for i < j (exact zeros dropped) and offset = sum_i tr(Qraw_[i,i]), so that
    tr(Qraw @ X) = tr(Q @ X) + offset for every X with identity diagonal blocks.
    """
    Qraw = np.asarray(Qraw, dtype=float)
    if Qraw.ndim != 2 or Qraw.shape[0] != Qraw.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {Qraw.shape}")
    if d < 1 or Qraw.shape[0] % d != 0:
        raise ValueError(f"matrix size {Qraw.shape[0]} is not a multiple of d={d}")
    if not np.isfinite(Qraw).all():
        raise ValueError("input matrix has non-finite entries")
    n = Qraw.shape[0] // d
    offset = float(np.trace(Qraw))
    blocks = {}
    for i in range(n):
        for j in range(i + 1, n):
            Bij = Qraw[i * d:(i + 1) * d, j * d:(j + 1) * d]
            Bji = Qraw[j * d:(j + 1) * d, i * d:(i + 1) * d]
            B = 0.5 * (Bij + Bji.T)
            if B.any():
                blocks[(i, j)] = B
    return BlockSparseSym(d, n, blocks), offset


def from_block_dict(d: int, n: int, raw: dict):
    """Build a preprocessed matrix from sparse blocks keyed by (i, j), 0-based.

    Keys may appear in either orientation (a missing orientation counts as a
    zero block); diagonal keys contribute only to the returned trace offset.
    """
    offset = 0.0
    acc = {}
    for (i, j), B in raw.items():
        B = np.asarray(B, dtype=float)
        if B.shape != (d, d):
            raise ValueError(f"block ({i},{j}) has shape {B.shape}, expected ({d},{d})")
        if not np.isfinite(B).all():
            raise ValueError(f"block ({i},{j}) has non-finite entries")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"block key ({i},{j}) out of range for n={n}")
        if i == j:
            offset += float(np.trace(B))
            continue
        key = (min(i, j), max(i, j))
        half = 0.5 * B if i < j else 0.5 * B.T
        if key in acc:
            acc[key] = acc[key] + half
        else:
            acc[key] = half
    blocks = {k: B for k, B in acc.items() if B.any()}
    return BlockSparseSym(d, n, blocks), offset


def write_bsm(Q: BlockSparseSym, path) -> None:
    """Write Q in the BSM text format (shortest round-trip float repr)."""
    with open(path, "w") as fh:
        fh.write(f"BSM {Q.d} {Q.n} {Q.num_blocks}\n")
        for i, j, B in sorted(Q.pairs(), key=lambda t: (t[0], t[1])):
            entries = " ".join(repr(float(v)) for v in B.ravel())
            fh.write(f"{i + 1} {j + 1} {entries}\n")


def read_bsm(path) -> BlockSparseSym:
    """Read a BSM text file; raises ParseError with the offending line number."""
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise ParseError(path, 1, "empty file, expected 'BSM d n m' header")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "BSM":
        raise ParseError(path, 1, f"bad header {lines[0].strip()!r}, expected 'BSM d n m'")
    try:
        d, n, m = int(head[1]), int(head[2]), int(head[3])
    except ValueError:
        raise ParseError(path, 1, f"non-integer header fields in {lines[0].strip()!r}") from None
    blocks = {}
    count = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2 + d * d:
            raise ParseError(path, lineno, f"expected 2 indices + {d * d} block entries, got {len(parts)} fields")
        try:
            i, j = int(parts[0]), int(parts[1])
            vals = [float(v) for v in parts[2:]]
        except ValueError:
            raise ParseError(path, lineno, f"non-numeric field in {line.strip()!r}") from None
        if not (1 <= i < j <= n):
            raise ParseError(path, lineno, f"indices ({i},{j}) violate 1 <= i < j <= n={n}")
        key = (i - 1, j - 1)
        if key in blocks:
            raise ParseError(path, lineno, f"duplicate block ({i},{j})")
        B = np.array(vals).reshape(d, d)
        if not np.isfinite(B).all():
            raise ParseError(path, lineno, f"non-finite entries in block ({i},{j})")
        blocks[key] = B
        count += 1
    if count != m:
        raise ParseError(path, len(lines), f"header declares {m} blocks, file has {count}")
    return BlockSparseSym(d, n, blocks)


def read_matrix_market(path):
    """Read a Matrix Market coordinate file as a d=1 instance.

    Returns (Q, offset) after symmetrization; diagonal entries go into the
    offset.  Only 'coordinate real' (general or symmetric) files are accepted.
    """
    with open(path) as fh:
        lines = fh.readlines()
    if not lines or not lines[0].startswith("%%MatrixMarket"):
        raise ParseError(path, 1, "missing %%MatrixMarket header")
    head = lines[0].split()
    if len(head) < 5 or head[1] != "matrix" or head[2] != "coordinate":
        raise ParseError(path, 1, f"unsupported header {lines[0].strip()!r}")
    field, symmetry = head[3], head[4]
    if field not in ("real", "integer"):
        raise ParseError(path, 1, f"unsupported field type {field!r}")
    if symmetry not in ("general", "symmetric"):
        raise ParseError(path, 1, f"unsupported symmetry {symmetry!r}")
    idx = 1
    while idx < len(lines) and lines[idx].lstrip().startswith("%"):
        idx += 1
    if idx >= len(lines):
        raise ParseError(path, len(lines), "missing size line")
    size = lines[idx].split()
    if len(size) != 3:
        raise ParseError(path, idx + 1, f"bad size line {lines[idx].strip()!r}")
    try:
        rows, cols, nnz = (int(v) for v in size)
    except ValueError:
        raise ParseError(path, idx + 1, f"non-integer size line {lines[idx].strip()!r}") from None
    if rows != cols:
        raise ParseError(path, idx + 1, f"matrix is {rows}x{cols}, expected square")
    raw = {}
    count = 0
    for lineno, line in enumerate(lines[idx + 1:], start=idx + 2):
        if not line.strip() or line.lstrip().startswith("%"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(path, lineno, f"expected 'i j value', got {line.strip()!r}")
        try:
            i, j = int(parts[0]) - 1, int(parts[1]) - 1
            v = float(parts[2])
        except ValueError:
            raise ParseError(path, lineno, f"non-numeric field in {line.strip()!r}") from None
        if not (0 <= i < rows and 0 <= j < rows):
            raise ParseError(path, lineno, f"indices out of range for n={rows}")
        if (i, j) in raw:
            raise ParseError(path, lineno, f"duplicate entry ({i + 1},{j + 1})")
        raw[(i, j)] = np.array([[v]])
        if symmetry == "symmetric" and i != j:
            raw[(j, i)] = np.array([[v]])
        count += 1
    if count != nnz:
        raise ParseError(path, len(lines), f"size line declares {nnz} entries, file has {count}")
    return from_block_dict(1, rows, raw)
