"""Spectral signatures of affine operators and the distances built on them.

An operator ``x -> act(W x + b)`` is represented by the singular values of its
augmented matrix ``[[W, b], [0, 1]]``. The unit-normalized singular-value
vector is treated as a pure state, which gives the Fubini-Study angle between
operators, a Wasserstein-2 distance between spectra, and the corresponding
functional deviation bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from spectral_frg.errors import (
    ConfigurationError,
    DegenerateSignatureError,
    NumericInputError,
    ParameterError,
    ShapeError,
)

# Distances below this are reported as exactly zero.
ZERO_DISTANCE = 1e-12

HALF_PI = math.pi / 2


@dataclass(frozen=True)
class AugmentedMatrix:
    """Block matrix ``[[W, b], [0, 1]]`` of shape ``(d_out+1, d_in+1)``."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 1:
            raise ShapeError(f"augmented matrix must be 2-D, got shape {e.shape}")
        expected = np.zeros(e.shape[1])
        expected[-1] = 1.0
        if not np.array_equal(e[-1], expected):
            raise ShapeError("augmented matrix bottom row must be (0, ..., 0, 1)")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def weight(self) -> np.ndarray:
        return self.entries[:-1, :-1]

    @property
    def bias(self) -> np.ndarray:
        return self.entries[:-1, -1]


def augment(weights, bias=None) -> AugmentedMatrix:
    """Build the augmented matrix of an affine map.

    Args:
        weights: ``(d_out, d_in)`` weight matrix.
        bias: optional length ``d_out`` vector; ``None`` means zero bias.

    Raises:
        ShapeError: if ``weights`` is not 2-D or the bias length does not
            match ``d_out``.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError(f"weights must be a 2-D matrix, got shape {w.shape}")
    d_out, d_in = w.shape
    if bias is None:
        b = np.zeros(d_out)
    else:
        b = np.asarray(bias, dtype=np.float64)
        if b.shape != (d_out,):
            raise ShapeError(
                f"bias shape {b.shape} does not match weights shape {w.shape}"
            )
    entries = np.zeros((d_out + 1, d_in + 1))
    entries[:d_out, :d_in] = w
    entries[:d_out, d_in] = b
    entries[d_out, d_in] = 1.0
    return AugmentedMatrix(entries)


@dataclass(frozen=True)
class SpectralSignature:
    """Descending singular values with their Frobenius norm and unit state."""

    singular_values: np.ndarray
    frobenius_norm: float
    state: np.ndarray
    source_name: str = ""

    @classmethod
    def from_values(cls, values, source_name: str = "") -> "SpectralSignature":
        """Build a signature from raw non-negative values (sorted here).

        A zero vector is accepted; distance routines reject it later.
        """
        s = np.asarray(values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(s)):
            raise NumericInputError("singular values must be finite")
        if np.any(s < 0):
            raise NumericInputError("singular values must be non-negative")
        # stable sort keeps original index order among ties
        s = s[np.argsort(-s, kind="stable")]
        norm = float(np.linalg.norm(s))
        state = s / norm if norm > 0 else np.zeros_like(s)
        s.setflags(write=False)
        state.setflags(write=False)
        return cls(s, norm, state, source_name)

    def __len__(self) -> int:
        return self.singular_values.shape[0]

    def padded(self, length: int) -> "SpectralSignature":
        extra = length - len(self)
        if extra < 0:
            raise ParameterError(f"cannot pad length {len(self)} down to {length}")
        if extra == 0:
            return self
        return SpectralSignature.from_values(
            np.concatenate([self.singular_values, np.zeros(extra)]), self.source_name
        )

    def scaled(self, c: float) -> "SpectralSignature":
        return SpectralSignature.from_values(self.singular_values * c, self.source_name)


def svd_spectrum(m: AugmentedMatrix, source_name: str = "") -> SpectralSignature:
    """All ``min(rows, cols)`` singular values of ``m``, descending."""
    entries = m.entries if isinstance(m, AugmentedMatrix) else np.asarray(m, float)
    if not np.all(np.isfinite(entries)):
        raise NumericInputError("matrix contains non-finite entries")
    s = np.linalg.svd(entries, compute_uv=False)
    return SpectralSignature.from_values(np.clip(s, 0.0, None), source_name)


def pad_pair(a: SpectralSignature, b: SpectralSignature):
    """Zero-extend the shorter spectrum so both have the same length."""
    m = max(len(a), len(b))
    return a.padded(m), b.padded(m)


def _require_nonzero(*sigs: SpectralSignature) -> None:
    for s in sigs:
        if not s.frobenius_norm > 0:
            name = f" {s.source_name!r}" if s.source_name else ""
            raise DegenerateSignatureError(f"signature{name} has zero norm")


def state_angle(u: np.ndarray, v: np.ndarray) -> float:
    """``arccos |<u, v>|`` for unit vectors, zero-padding the shorter one.

    Evaluated as ``2 * arcsin(min(|u - v|, |u + v|) / 2)``, which is the same
    angle but does not lose precision near zero the way ``arccos`` does.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape[0] != v.shape[0]:
        n = max(u.shape[0], v.shape[0])
        u = np.pad(u, (0, n - u.shape[0]))
        v = np.pad(v, (0, n - v.shape[0]))
    chord = min(float(np.linalg.norm(u - v)), float(np.linalg.norm(u + v)))
    d = 2.0 * math.asin(min(chord / 2.0, 1.0))
    if d < ZERO_DISTANCE:
        return 0.0
    return min(d, HALF_PI)


def fs_distance(a: SpectralSignature, b: SpectralSignature) -> float:
    """Fubini-Study angle between two spectral states, in ``[0, pi/2]``."""
    _require_nonzero(a, b)
    pa, pb = pad_pair(a, b)
    return state_angle(pa.state, pb.state)


@dataclass(frozen=True)
class MajorizationProfile:
    grid: np.ndarray
    values: np.ndarray


def majorization_profile(s: SpectralSignature) -> MajorizationProfile:
    """Partial sums of singular values over the Frobenius norm, at ``k/m``."""
    _require_nonzero(s)
    m = len(s)
    grid = np.arange(m + 1) / m
    values = np.concatenate([[0.0], np.cumsum(s.singular_values)]) / s.frobenius_norm
    return MajorizationProfile(grid, values)


def w2_distance(a: SpectralSignature, b: SpectralSignature) -> float:
    """Wasserstein-2 distance between the spectra as uniform empirical measures.

    Each padded unit state puts mass ``1/m`` on each of its entries; in 1-D the
    optimal coupling matches the sorted entries, so the distance is the RMS of
    the entrywise difference of the descending states.
    """
    _require_nonzero(a, b)
    pa, pb = pad_pair(a, b)
    diff = pa.state - pb.state
    w2 = math.sqrt(float(np.dot(diff, diff)) / len(pa))
    return 0.0 if w2 < ZERO_DISTANCE else w2


@dataclass(frozen=True)
class ActivationSpec:
    """Activation with its Lipschitz constant and ``|act(0)|``."""

    kind: str
    lipschitz_L: float
    origin_bound_M: float

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return _ACTIVATION_FUNCS[self.kind](z)


def _sigmoid(z):
    # tanh form avoids overflow warnings for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


_ACTIVATION_FUNCS = {
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "sigmoid": _sigmoid,
    "identity": lambda z: z,
}

ACTIVATIONS: Mapping[str, ActivationSpec] = {
    "relu": ActivationSpec("relu", 1.0, 0.0),
    "tanh": ActivationSpec("tanh", 1.0, 0.0),
    "sigmoid": ActivationSpec("sigmoid", 0.25, 0.5),
    "identity": ActivationSpec("identity", 1.0, 0.0),
}


def activation(kind: str) -> ActivationSpec:
    try:
        return ACTIVATIONS[kind]
    except KeyError:
        raise ConfigurationError(
            f"unknown activation {kind!r}; expected one of {sorted(ACTIVATIONS)}"
        ) from None


def norms_differ(na: float, nb: float, tolerance: float) -> bool:
    return abs(na - nb) > tolerance * max(na, nb)


def equivalence_bound(
    a: SpectralSignature,
    b: SpectralSignature,
    act: ActivationSpec,
    radius_R: float,
    norm_eq_tolerance: float = 1e-9,
) -> float:
    """Upper bound on ``max_{|x| <= R} |Phi_a(x) - Phi_b(x)|`` claimed from spectra.

    ``L (R + 1) (|A|_F + |B|_F) W2(a, b) + 2 M [norms differ]``; norms are
    compared with a relative tolerance.
    """
    if not radius_R > 0:
        raise ParameterError(f"radius must be positive, got {radius_R}")
    if not norm_eq_tolerance > 0:
        raise ParameterError(f"norm tolerance must be positive, got {norm_eq_tolerance}")
    w2 = w2_distance(a, b)
    na, nb = a.frobenius_norm, b.frobenius_norm
    bound = act.lipschitz_L * (radius_R + 1.0) * (na + nb) * w2
    if norms_differ(na, nb, norm_eq_tolerance):
        bound += 2.0 * act.origin_bound_M
    return bound


def nonzero_rank(s: SpectralSignature) -> int:
    """Number of singular values above the usual numerical-rank cutoff."""
    sv = s.singular_values
    if sv.size == 0 or sv[0] == 0:
        return 0
    tol = sv[0] * max(sv.size, 1) * np.finfo(np.float64).eps
    return int(np.count_nonzero(sv > tol))


def spectral_probabilities(s: SpectralSignature) -> np.ndarray:
    """``p_j = sigma_j^2 / sum sigma^2`` with sub-rank values set to zero."""
    _require_nonzero(s)
    r = nonzero_rank(s)
    sq = np.zeros(len(s))
    sq[:r] = s.singular_values[:r] ** 2
    return sq / sq.sum()


def rank_select(s: SpectralSignature, delta: float) -> int:
    """Smallest rank whose kept spectral mass is at least ``exp(-delta)``.

    Equivalently the smallest ``q`` with ``-log(sum_{j<=q} p_j) <= delta``.
    The comparison is made on the discarded tail mass, which is exactly zero
    once every nonzero singular value is kept.
    """
    if delta < 0:
        raise ParameterError(f"delta must be non-negative, got {delta}")
    p = spectral_probabilities(s)
    r = nonzero_rank(s)
    # tail[q] = sum_{j >= q} p_j, i.e. mass lost when keeping the first q values
    tail = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
    allowed = -math.expm1(-delta)
    for q in range(1, r + 1):
        if q == r or tail[q] <= allowed:
            return q
    return r


def truncated_reconstruction(m: AugmentedMatrix, q: int) -> np.ndarray:
    """Rank-``q`` SVD reconstruction of ``m`` without restoring the bottom row."""
    rows, cols = m.shape
    if not 1 <= q <= min(rows, cols):
        raise ParameterError(f"rank {q} outside [1, {min(rows, cols)}]")
    u, s, vt = np.linalg.svd(m.entries, full_matrices=False)
    return (u[:, :q] * s[:q]) @ vt[:q]


def low_rank_truncate(m: AugmentedMatrix, q: int) -> AugmentedMatrix:
    """Rank-``q`` approximation of ``m`` with the homogeneous row put back."""
    approx = truncated_reconstruction(m, q)
    approx[-1] = 0.0
    approx[-1, -1] = 1.0
    return AugmentedMatrix(approx)


def embedding_distance(a, b) -> float:
    """Fubini-Study angle between two signatures or two unit feature vectors."""
    if isinstance(a, SpectralSignature) and isinstance(b, SpectralSignature):
        return fs_distance(a, b)
    return state_angle(a, b)


def weighted_fs_distance(
    groups: Iterable[tuple],
    costs: Mapping[str, float],
) -> float:
    """Cost-weighted root-sum-square of per-group Fubini-Study angles.

    Each group is ``(a, b, op_type)`` where ``a`` and ``b`` are spectral
    signatures or unit embedding vectors of paired sub-operators.
    """
    total = 0.0
    for a, b, op_type in groups:
        if op_type not in costs:
            raise ConfigurationError(f"no cost entry for hardware op type {op_type!r}")
        total += float(costs[op_type]) * embedding_distance(a, b) ** 2
    return math.sqrt(total)


def mean_pairwise_distance(distances: np.ndarray) -> float:
    n = distances.shape[0]
    if n < 2:
        return 0.0
    iu = np.triu_indices(n, k=1)
    return float(np.mean(distances[iu]))


__all__ = [
    "ACTIVATIONS",
    "ActivationSpec",
    "AugmentedMatrix",
    "MajorizationProfile",
    "SpectralSignature",
    "activation",
    "augment",
    "embedding_distance",
    "equivalence_bound",
    "fs_distance",
    "low_rank_truncate",
    "majorization_profile",
    "mean_pairwise_distance",
    "nonzero_rank",
    "pad_pair",
    "rank_select",
    "spectral_probabilities",
    "state_angle",
    "svd_spectrum",
    "truncated_reconstruction",
    "w2_distance",
    "weighted_fs_distance",
]
