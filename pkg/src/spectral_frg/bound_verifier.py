"""Empirical checks of the spectral-to-functional deviation bound.

For a pair of affine operators sharing an activation, the claimed bound is
computed from their spectra and compared with the largest output deviation
observed on sampled inputs ``|x| <= R``. Violations are results, not errors:
spectra are invariant under orthogonal transforms, so ``(W, QW)`` pairs have
zero spectral distance and usually different outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from spectral_frg.errors import ParameterError, ShapeError
from spectral_frg.spectral_core import (
    ActivationSpec,
    activation,
    augment,
    equivalence_bound,
    fs_distance,
    norms_differ,
    svd_spectrum,
    w2_distance,
)

VIOLATION_SLACK = 1e-9
CHAIN_SLACK = 1e-9


@dataclass(frozen=True)
class AffineOperator:
    name: str
    weight: np.ndarray
    bias: np.ndarray | None = None

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    def bias_or_zero(self) -> np.ndarray:
        return np.zeros(self.d_out) if self.bias is None else np.asarray(self.bias, float)


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int or a sequence of ints."""
    if isinstance(seed, (int, np.integer)):
        seed = int(seed)
    else:
        seed = [int(s) for s in seed]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def sample_ball(n_samples: int, dim: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """``n_samples`` points uniform in the closed ``dim``-ball of ``radius``."""
    if n_samples == 0:
        return np.zeros((0, dim))
    g = rng.standard_normal((n_samples, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    r = radius * rng.random((n_samples, 1)) ** (1.0 / dim)
    x = g / norms * r
    # guard against the last ulp pushing a point outside
    over = np.linalg.norm(x, axis=1) > radius
    x[over] *= radius / np.linalg.norm(x[over], axis=1, keepdims=True)
    return x


def axis_points(dim: int, radius: float) -> np.ndarray:
    eye = np.eye(dim) * radius
    return np.concatenate([eye, -eye])


def probe_inputs(dim: int, radius: float, n_samples: int, seed) -> np.ndarray:
    """Random ball samples followed by the ``2*dim`` points ``+-R e_i``."""
    return np.concatenate([sample_ball(n_samples, dim, radius, make_rng(seed)),
                           axis_points(dim, radius)])


def pad_columns(w: np.ndarray, cols: int) -> np.ndarray:
    return np.pad(w, ((0, 0), (0, cols - w.shape[1])))


def outputs(w: np.ndarray, b: np.ndarray, act: ActivationSpec, x: np.ndarray) -> np.ndarray:
    """Rows of ``act(W x + b)`` for each row ``x`` of ``x``."""
    return act(x @ w.T + b)


def deviations(a: AffineOperator, b: AffineOperator, act: ActivationSpec, x: np.ndarray):
    """Per-sample ``|Phi_a(x) - Phi_b(x)|``; inputs/outputs zero-padded to match."""
    d_in = x.shape[1]
    ya = outputs(pad_columns(np.asarray(a.weight, float), d_in), a.bias_or_zero(), act, x)
    yb = outputs(pad_columns(np.asarray(b.weight, float), d_in), b.bias_or_zero(), act, x)
    m = max(ya.shape[1], yb.shape[1])
    ya = np.pad(ya, ((0, 0), (0, m - ya.shape[1])))
    yb = np.pad(yb, ((0, 0), (0, m - yb.shape[1])))
    return np.linalg.norm(ya - yb, axis=1)


@dataclass(frozen=True)
class BoundReport:
    pair: tuple[str, str]
    activation: ActivationSpec
    radius_R: float
    fs: float
    w2: float
    theoretical_bound: float
    empirical_max_deviation: float
    n_samples: int
    violated: bool
    input_padded: bool = False
    output_padded: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pair"] = list(self.pair)
        return d


def verify_pair(
    a: AffineOperator,
    b: AffineOperator,
    act: ActivationSpec,
    R: float,
    n_samples: int,
    seed,
    *,
    norm_eq_tolerance: float = 1e-9,
    allow_output_padding: bool = True,
) -> BoundReport:
    """Compare the spectral bound with the sampled maximum deviation.

    Inputs are drawn in the ball of the larger input dimension (the smaller
    operator ignores the extra coordinates), plus the axis extreme points.
    ``n_samples`` in the report counts all evaluated points.

    Raises:
        ShapeError: output dimensions differ and ``allow_output_padding`` is
            false.
        AssertionError: in the equal-norm case, if ``W2 <= sqrt(2) d_FS``
            fails (it is provable, so this signals a numerical defect).
    """
    if not R > 0:
        raise ParameterError(f"radius must be positive, got {R}")
    if a.d_out != b.d_out and not allow_output_padding:
        raise ShapeError(f"output dimensions differ: {a.weight.shape} vs {b.weight.shape}")
    sa = svd_spectrum(augment(a.weight, a.bias), a.name)
    sb = svd_spectrum(augment(b.weight, b.bias), b.name)
    fs = fs_distance(sa, sb)
    w2 = w2_distance(sa, sb)
    if not norms_differ(sa.frobenius_norm, sb.frobenius_norm, norm_eq_tolerance):
        assert w2 <= math.sqrt(2.0) * fs + CHAIN_SLACK, (
            f"W2 {w2} exceeds sqrt(2) * d_FS {fs} for equal-norm pair {a.name}/{b.name}"
        )
    bound = equivalence_bound(sa, sb, act, R, norm_eq_tolerance)
    x = probe_inputs(max(a.d_in, b.d_in), R, n_samples, seed)
    emp = float(np.max(deviations(a, b, act, x)))
    return BoundReport(
        pair=(a.name, b.name),
        activation=act,
        radius_R=float(R),
        fs=fs,
        w2=w2,
        theoretical_bound=float(bound),
        empirical_max_deviation=emp,
        n_samples=int(x.shape[0]),
        violated=bool(emp > bound + VIOLATION_SLACK),
        input_padded=a.d_in != b.d_in,
        output_padded=a.d_out != b.d_out,
    )


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix.

    QR of a standard Gaussian matrix, with the columns of Q multiplied by the
    signs of R's diagonal so the factorization is unique.
    """
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def cyclic_permutation(dim: int) -> np.ndarray:
    """``P e_i = e_{i+1 mod dim}``; for ``dim == 2`` this is the swap."""
    return np.roll(np.eye(dim), 1, axis=0)


def counterexample_suite(
    dim: int,
    n_rotations: int,
    seed,
    *,
    transforms: Sequence[np.ndarray] | None = None,
    act: ActivationSpec | None = None,
    R: float = 1.0,
    n_samples: int = 256,
) -> list[BoundReport]:
    """Pairs ``(W, QW)`` with zero bias: identical spectra, different functions.

    By default the first pair is ``(I, P)`` with ``P`` the cyclic
    permutation, followed by ``n_rotations`` pairs with a seeded Gaussian
    ``W`` and a Haar-random ``Q``. If ``transforms`` is given, each supplied
    ``Q`` is paired with ``W = I`` instead.
    """
    if dim < 2:
        raise ParameterError(f"dim must be at least 2, got {dim}")
    if n_rotations < 0:
        raise ParameterError(f"n_rotations must be non-negative, got {n_rotations}")
    act = act or activation("relu")
    rng = make_rng(seed)
    pairs = []
    if transforms is not None:
        for k, q in enumerate(transforms):
            q = np.asarray(q, dtype=np.float64)
            if q.shape != (dim, dim):
                raise ShapeError(f"transform {k} has shape {q.shape}, expected {(dim, dim)}")
            pairs.append((np.eye(dim), q, f"Q{k}"))
    else:
        pairs.append((np.eye(dim), cyclic_permutation(dim), "perm"))
        for k in range(n_rotations):
            w = rng.standard_normal((dim, dim))
            pairs.append((w, random_orthogonal(dim, rng), f"rot{k}"))
    reports = []
    for k, (w, q, tag) in enumerate(pairs):
        a = AffineOperator(f"W[{tag}]", w)
        b = AffineOperator(f"QW[{tag}]", q @ w)
        reports.append(verify_pair(a, b, act, R, n_samples, (int(seed), k)))
    return reports


def violation_fraction(reports: Iterable[BoundReport]) -> float:
    reports = list(reports)
    if not reports:
        return 0.0
    return sum(r.violated for r in reports) / len(reports)


def write_reports(reports: Iterable[BoundReport], path) -> None:
    """One JSON object per line."""
    lines = [json.dumps(r.to_dict(), sort_keys=True) for r in reports]
    Path(path).write_text("".join(line + "\n" for line in lines))
