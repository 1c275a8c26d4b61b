"""Spectral embeddings of adjacency matrices and scree-plot dimension selection."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graph import AdjacencyMatrix

__all__ = [
    "Embedding",
    "JointEmbedding",
    "ase",
    "dase",
    "joint_embedding",
    "select_dim",
    "save_embedding_csv",
    "load_embedding_csv",
    "save_embedding_binary",
    "load_embedding_binary",
]

# Below this size a dense decomposition is both faster and more robust than
# the iterative solvers.
_DENSE_CUTOFF = 2000

_SIDES = ("symmetric", "left", "right")


@dataclass(frozen=True)
class Embedding:
    """Estimated latent positions with their retained spectrum.

    ``positions`` is ``n x d`` with column j scaled so its squared norm is
    the magnitude of the j-th spectrum entry.  ``spectrum`` holds signed
    eigenvalues (symmetric case) in decreasing magnitude, or singular
    values in decreasing order.
    """

    positions: np.ndarray
    spectrum: np.ndarray
    side: str = "symmetric"

    def __post_init__(self):
        if self.side not in _SIDES:
            raise ValueError(f"unknown embedding side {self.side!r}")
        if self.positions.ndim != 2 or self.spectrum.shape != (self.positions.shape[1],):
            raise ValueError("positions must be n x d with one spectrum entry per column")

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def n_dims(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class JointEmbedding:
    """Concatenation ``[left, right]`` of the two sides of a directed embedding."""

    positions: np.ndarray
    spectrum: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def n_dims(self) -> int:
        return self.positions.shape[1]


def _as_array(a):
    if isinstance(a, AdjacencyMatrix):
        return a.matrix
    if sp.issparse(a):
        return a
    return np.asarray(a, dtype=float)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            out[:, j] = -col
    return out


def ase(a, d: int) -> Embedding:
    """Spectral embedding of a symmetric matrix.

    Keeps the ``d`` eigenvalues of largest magnitude (ties broken toward
    the positive eigenvalue) and returns ``positions = vectors *
    sqrt(|values|)``.  Accepts a binary adjacency matrix or any symmetric
    real matrix.
    """
    mat = _as_array(a)
    n, m = mat.shape
    if n != m:
        raise ValueError("symmetric embedding requires a square matrix")
    if isinstance(a, AdjacencyMatrix) and not a.symmetric:
        raise ValueError("matrix is not symmetric; use dase for directed graphs")
    if not 1 <= d <= n:
        raise ValueError(f"d must be in [1, {n}], got {d}")

    if sp.issparse(mat) and n >= _DENSE_CUTOFF and d < n - 1:
        vals, vecs = spla.eigsh(mat.astype(float), k=min(2 * d, n - 1), which="LM")
    else:
        dense = mat.toarray() if sp.issparse(mat) else mat
        if not np.allclose(dense, dense.T, atol=1e-10):
            raise ValueError("matrix is not symmetric; use dase for directed graphs")
        vals, vecs = np.linalg.eigh(dense)
    # magnitude-descending order, positive eigenvalue first on ties
    order = np.lexsort((-vals, -np.abs(vals)))[:d]
    vals, vecs = vals[order], _fix_signs(vecs[:, order])
    return Embedding(vecs * np.sqrt(np.abs(vals)), vals, side="symmetric")


def dase(a, d: int) -> tuple[Embedding, Embedding]:
    """Singular-value embedding of a rectangular or asymmetric matrix.

    Returns the left and right embeddings ``U sqrt(S)`` and ``V sqrt(S)``
    for the ``d`` largest singular values in decreasing order.
    """
    mat = _as_array(a)
    n, m = mat.shape
    dmax = min(n, m)
    if not 1 <= d <= dmax:
        raise ValueError(f"d must be in [1, {dmax}], got {d}")

    if sp.issparse(mat) and dmax >= _DENSE_CUTOFF and d < dmax:
        u, s, vt = spla.svds(mat.astype(float), k=d)
    else:
        dense = mat.toarray() if sp.issparse(mat) else mat
        u, s, vt = np.linalg.svd(dense, full_matrices=False)
    order = np.argsort(-s)[:d]
    u, s, v = u[:, order], s[order], vt[order].T
    for j in range(d):  # sign pairs flip together
        col = u[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            u[:, j] = -col
            v[:, j] = -v[:, j]
    root = np.sqrt(s)
    return (
        Embedding(u * root, s.copy(), side="left"),
        Embedding(v * root, s.copy(), side="right"),
    )


def joint_embedding(left: Embedding, right: Embedding) -> JointEmbedding:
    """Column-concatenate the two sides of a directed embedding."""
    if left.positions.shape != right.positions.shape:
        raise ValueError("left and right embeddings must have equal shapes")
    if not np.allclose(left.spectrum, right.spectrum):
        raise ValueError("left and right embeddings come from different spectra")
    return JointEmbedding(
        np.hstack([left.positions, right.positions]), left.spectrum.copy()
    )


def _profile_split(vals: np.ndarray) -> int:
    """Most likely split of a decreasing profile into head and tail groups.

    Scores every split with a two-group common-variance normal profile
    likelihood and returns the head size (first maximiser on ties).
    """
    p = vals.size
    best_q, best_ll = 1, -np.inf
    for q in range(1, p):
        head, tail = vals[:q], vals[q:]
        dev = np.concatenate([head - head.mean(), tail - tail.mean()])
        var = np.dot(dev, dev) / p
        if var < 1e-12 * (vals.mean() ** 2 + 1e-30):
            ll = 0.0  # degenerate flat profile; all splits tie
        else:
            ll = -0.5 * p * np.log(var)
        if ll > best_ll + 1e-12:
            best_q, best_ll = q, ll
    return best_q


def select_dim(spectrum, elbow_index: int = 1) -> int:
    """Pick an embedding dimension at the requested scree-plot elbow.

    The first elbow maximises the two-group profile likelihood of the
    spectrum; later elbows repeat the criterion on the remaining tail, so
    ``elbow_index=2`` returns the second elbow and so on.
    """
    vals = np.asarray(spectrum, dtype=float)
    if vals.ndim != 1 or vals.size < 3:
        raise ValueError("need at least 3 spectrum values")
    if np.any(vals <= 0) or np.any(np.diff(vals) > 1e-12):
        raise ValueError("spectrum must be positive and non-increasing")
    if elbow_index < 1:
        raise ValueError("elbow_index must be >= 1")
    pos = 0
    for e in range(elbow_index):
        tail = vals[pos:]
        if tail.size < 2:
            raise ValueError(f"too few spectrum values for elbow {elbow_index}")
        pos += _profile_split(tail)
    return pos


# ---------------------------------------------------------------------------
# embedding persistence

def save_embedding_csv(emb, path) -> None:
    """CSV with a spectrum header and one row of coordinates per node."""
    side = getattr(emb, "side", "joint")
    with open(path, "w") as fh:
        fh.write(f"# side: {side}\n")
        fh.write("# spectrum: " + ",".join(repr(float(s)) for s in emb.spectrum) + "\n")
        fh.write(",".join(f"dim{j + 1}" for j in range(emb.n_dims)) + "\n")
        for row in emb.positions:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_embedding_csv(path):
    side = None
    spectrum = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("# side:"):
                side = line.split(":", 1)[1].strip()
            elif line.startswith("# spectrum:"):
                spectrum = np.array(
                    [float(x) for x in line.split(":", 1)[1].split(",")]
                )
            elif line.startswith("dim"):
                continue
            else:
                rows.append([float(x) for x in line.split(",")])
    if side is None or spectrum is None or not rows:
        raise ValueError(f"{path}: not an embedding CSV")
    positions = np.array(rows)
    if side == "joint":
        return JointEmbedding(positions, spectrum)
    return Embedding(positions, spectrum, side=side)


_MAGIC = b"LSBMEMB1"
_SIDE_CODES = {"symmetric": 0, "left": 1, "right": 2, "joint": 3}
_SIDE_NAMES = {v: k for k, v in _SIDE_CODES.items()}


def save_embedding_binary(emb, path) -> None:
    """Compact binary layout: magic, u32 n, u32 d, u32 n_spectrum, u8 side,
    then the spectrum and the row-major positions as little-endian float64."""
    side = getattr(emb, "side", "joint")
    n, d = emb.positions.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIB", n, d, emb.spectrum.size, _SIDE_CODES[side]))
        fh.write(np.ascontiguousarray(emb.spectrum, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(emb.positions, dtype="<f8").tobytes())


def load_embedding_binary(path):
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not an embedding file")
        n, d, ns, side_code = struct.unpack("<IIIB", fh.read(13))
        spectrum = np.frombuffer(fh.read(8 * ns), dtype="<f8").copy()
        positions = (
            np.frombuffer(fh.read(8 * n * d), dtype="<f8").reshape(n, d).copy()
        )
    side = _SIDE_NAMES[side_code]
    if side == "joint":
        return JointEmbedding(positions, spectrum)
    return Embedding(positions, spectrum, side=side)
