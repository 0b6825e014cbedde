"""Two-stage update compression: k-medoids quantization and adaptive Huffman coding.

Quantization turns a flat update into a codebook of ``K`` medoid values and
an index vector. The index vector is then coded losslessly with the FGK
adaptive Huffman scheme. Wire formats:

* bitstream: ``u32 big-endian symbol count`` followed by the FGK payload,
  MSB-first, zero-padded to a byte boundary
* codebook: ``K`` IEEE-754 float64 values, big-endian
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import _fgk, _pam
from .errors import ContractError, DecodeError

HEADER_BITS = 32


@dataclass(frozen=True)
class Codebook:
    heads: np.ndarray

    @property
    def k(self) -> int:
        return int(self.heads.shape[0])

    def to_bytes(self) -> bytes:
        return np.asarray(self.heads, dtype=">f8").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Codebook":
        if len(raw) % 8:
            raise DecodeError("codebook length is not a multiple of 8 bytes")
        return cls(np.frombuffer(raw, dtype=">f8").astype(np.float64))


@dataclass(frozen=True)
class Bitstream:
    count: int
    payload: bytes
    nbits: int

    def to_bytes(self) -> bytes:
        return struct.pack(">I", self.count) + self.payload

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Bitstream":
        if len(raw) < 4:
            raise DecodeError("bitstream shorter than its 32-bit header")
        (count,) = struct.unpack(">I", raw[:4])
        return cls(count, bytes(raw[4:]), 8 * (len(raw) - 4))

    @property
    def total_bits(self) -> int:
        """Header plus unpadded payload bits."""
        return HEADER_BITS + self.nbits

    @property
    def wire_bits(self) -> int:
        return 8 * (4 + len(self.payload))


# ---------------------------------------------------------------- k-medoids

def kmedoids(values, k: int, seed=0, max_swaps: int = 200):
    """PAM quantization of a 1-D array into ``k`` medoids under ``|a - b|``.

    The starting medoids are the exact optimum over contiguous runs of the
    sorted values (optimal clusters are contiguous in one dimension), and the
    PAM SWAP phase then applies any improving medoid/non-medoid exchange.
    Members go to the nearest medoid, with ties going to the lower codebook
    index. Codebook entries are sorted ascending. ``seed`` only orders exact
    ties among equal-cost candidates, so results are reproducible.

    Returns ``(Codebook, index_vector, total_cost)``.
    """
    x = np.ascontiguousarray(np.asarray(values, dtype=np.float64).ravel())
    n = x.size
    if k < 1:
        raise ContractError("k must be >= 1")
    if n < k:
        raise ContractError(f"need at least k={k} values, got {n}")
    if not np.all(np.isfinite(x)):
        raise ContractError("values must be finite")
    tiebreak = np.random.default_rng(seed).permutation(n).astype(np.int64)
    medoids = _pam.pam(x, int(k), tiebreak, int(max_swaps))
    heads = np.sort(x[medoids], kind="stable")
    dist = np.abs(x[:, None] - heads[None, :])
    index = np.argmin(dist, axis=1).astype(np.int64)
    return Codebook(heads), index, float(dist[np.arange(n), index].sum())


def silhouette(values, labels) -> float:
    """Mean silhouette under ``|a - b|``; singleton clusters score 0."""
    x = np.asarray(values, dtype=np.float64).ravel()
    lab = np.asarray(labels)
    uniq = np.unique(lab)
    if uniq.size < 2 or uniq.size >= x.size:
        raise ContractError("silhouette needs 2 <= clusters < samples")
    dist = np.abs(x[:, None] - x[None, :])
    onehot = (lab[:, None] == uniq[None, :]).astype(np.float64)
    sums = dist @ onehot
    counts = onehot.sum(axis=0)
    own = np.searchsorted(uniq, lab)
    n_own = counts[own]
    a = np.where(n_own > 1, sums[np.arange(x.size), own] / np.maximum(n_own - 1, 1), 0.0)
    mean_other = sums / counts[None, :]
    mean_other[np.arange(x.size), own] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((n_own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def choose_k(values, k_range, seed=0) -> int:
    """Pick the k with the highest mean silhouette; ties go to the smaller k."""
    x = np.asarray(values, dtype=np.float64).ravel()
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ContractError("empty k range")
    if np.ptp(x) == 0:
        raise ContractError("silhouette is undefined for identical values")
    if ks[0] < 2 or ks[-1] > x.size - 1:
        raise ContractError("k range must lie within [2, len(values) - 1]")
    best_k, best_s = None, -np.inf
    for k in ks:
        _, idx, _ = kmedoids(x, k, seed)
        if np.unique(idx).size < 2:
            continue
        s = silhouette(x, idx)
        if s > best_s + 1e-12:
            best_k, best_s = k, s
    if best_k is None:
        raise ContractError("no k in range produced two or more clusters")
    return best_k


def quantize(values, k: int, seed=0):
    """Quantize an update, collapsing all-equal input to a one-entry codebook."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        return Codebook(np.zeros(0)), np.zeros(0, dtype=np.int64)
    if np.ptp(x) == 0:
        return Codebook(x[:1].copy()), np.zeros(x.size, dtype=np.int64)
    cb, idx, _ = kmedoids(x, min(k, x.size), seed)
    return cb, idx


def reconstruct(cb: Codebook, index) -> np.ndarray:
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= cb.k):
        raise ContractError("index outside the codebook")
    return cb.heads[idx]


# ----------------------------------------------------------- adaptive Huffman

def ahc_encode(index) -> Bitstream:
    sym = np.ascontiguousarray(np.asarray(index, dtype=np.int64).ravel())
    if sym.size and (sym.min() < 0 or sym.max() >= _fgk.ALPHABET):
        raise ContractError("symbols must fit in 16 bits")
    if sym.size >= 1 << 32:
        raise ContractError("too many symbols for a 32-bit header")
    payload, nbits = _fgk.encode(sym)
    return Bitstream(int(sym.size), payload.tobytes(), int(nbits))


def ahc_decode(stream) -> np.ndarray:
    """Inverse of :func:`ahc_encode`; accepts a :class:`Bitstream` or its wire bytes."""
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = Bitstream.from_bytes(bytes(stream))
    payload = np.frombuffer(stream.payload, dtype=np.uint8)
    out, err, used = _fgk.decode(payload, stream.count)
    if err == _fgk.ERR_TRUNCATED:
        raise DecodeError(f"payload exhausted before {stream.count} symbols were decoded")
    if err != _fgk.ERR_NONE:
        raise DecodeError("corrupt adaptive Huffman payload")
    if len(stream.payload) * 8 - used >= 8:
        raise DecodeError("trailing bytes after the last symbol")
    return out


def empirical_entropy(index) -> float:
    idx = np.asarray(index).ravel()
    if idx.size == 0:
        return 0.0
    _, counts = np.unique(idx, return_counts=True)
    p = counts / idx.size
    return float(-(p * np.log2(p)).sum())


def compress_update(values, k: int, seed=0):
    """Quantize then entropy-code; returns ``(Codebook, Bitstream, index_vector)``."""
    cb, idx = quantize(values, k, seed)
    return cb, ahc_encode(idx), idx
