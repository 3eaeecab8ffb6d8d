"""Pearson correlation, its gradient, the two training losses and the AAD decision rule.

All arithmetic is done in float64 whatever the storage dtype of the inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegeneratePredictionError,
    DegenerateVarianceError,
    EmptyInputError,
    ShapeError,
)

ON_COLLAPSE = ("raise", "direction")


class LossKind(str, enum.Enum):
    PCC = "pcc"
    DELTA_PCC = "delta_pcc"


# Not a LossKind: -rho_a + sum_j rho_u,j. Reachable only via loss_function(..., experimental=True).
NEG_SUM = "neg_sum"


@dataclass(frozen=True)
class EnvelopeSet:
    """T x N speech envelopes; column ``attended_index`` is the attended stream."""

    streams: np.ndarray
    attended_index: int

    def __post_init__(self) -> None:
        s = np.asarray(self.streams)
        if s.ndim != 2:
            raise ShapeError(f"streams must be T x N, got shape {s.shape}")
        t, n = s.shape
        if n < 2 or t < 2:
            raise ShapeError(f"need T >= 2 and N >= 2, got T={t}, N={n}")
        if not 0 <= self.attended_index < n:
            raise ShapeError(f"attended_index {self.attended_index} not in [0, {n})")
        object.__setattr__(self, "streams", s)
        object.__setattr__(self, "attended_index", int(self.attended_index))

    @property
    def n_samples(self) -> int:
        return self.streams.shape[0]

    @property
    def n_streams(self) -> int:
        return self.streams.shape[1]

    @property
    def attended(self) -> np.ndarray:
        return self.streams[:, self.attended_index]

    @property
    def unattended_indices(self) -> list[int]:
        return [j for j in range(self.n_streams) if j != self.attended_index]


@dataclass(frozen=True)
class CorrelationRecord:
    rho_a: float
    rho_u: tuple[float, ...]
    delta: float

    @classmethod
    def from_values(cls, rho_a: float, rho_u: Sequence[float]) -> CorrelationRecord:
        rho_u = tuple(float(r) for r in rho_u)
        return cls(float(rho_a), rho_u, float(rho_a) - float(np.mean(rho_u)))

    @property
    def correct(self) -> bool:
        return all(self.rho_a > r for r in self.rho_u)


def _centered(v, name: str) -> tuple[np.ndarray, float]:
    v = np.asarray(v, dtype=np.float64)
    c = v - v.mean()
    norm = float(np.sqrt(c @ c))
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    if norm <= 4 * np.finfo(np.float64).eps * np.sqrt(v.size) * scale or norm == 0.0:
        raise DegenerateVarianceError(name)
    return c, norm


def _check_pair(x, z) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.ndim != 1 or x.shape != z.shape:
        raise ShapeError(f"need equal-length 1-D inputs, got {x.shape} and {z.shape}")
    if x.size < 2:
        raise ShapeError("need at least 2 samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
        raise ValueError("non-finite input to pearson")
    return x, z


def pearson(x, z) -> float:
    x, z = _check_pair(x, z)
    xc, nx = _centered(x, "x")
    zc, nz = _centered(z, "z")
    # one sqrt of the product keeps pearson(x, x) == 1.0 exactly
    return float(np.clip((xc @ zc) / np.sqrt((xc @ xc) * (zc @ zc)), -1.0, 1.0))


def pearson_grad(x, z) -> np.ndarray:
    """d pearson(x, z) / dx. Sums to zero over t."""
    x, z = _check_pair(x, z)
    xc, nx = _centered(x, "x")
    zc, nz = _centered(z, "z")
    r = (xc @ zc) / (nx * nz)
    return zc / (nx * nz) - r * xc / (nx * nx)


def _collapse_direction(z) -> np.ndarray:
    # Limit of the gradient direction as a constant prediction is perturbed:
    # rescaled so it has the same norm as an ordinary pearson gradient at ||x~|| = 1.
    zc, nz = _centered(z, "z")
    return zc / nz


def _column_terms(yhat, env: EnvelopeSet, on_collapse: str):
    """Yield (column_index, rho, drho/dyhat) for every stream."""
    if on_collapse not in ON_COLLAPSE:
        raise ValueError(f"on_collapse must be one of {ON_COLLAPSE}")
    y = np.asarray(yhat, dtype=np.float64)
    if y.shape != (env.n_samples,):
        raise ShapeError(f"prediction shape {y.shape} != ({env.n_samples},)")
    cols = np.asarray(env.streams, dtype=np.float64)
    labels = _column_labels(env)
    for j in range(env.n_streams):
        _centered(cols[:, j], labels[j])
    try:
        yc, ny = _centered(y, "prediction")
    except DegenerateVarianceError:
        if on_collapse == "raise":
            raise DegeneratePredictionError() from None
        return [(j, 0.0, _collapse_direction(cols[:, j])) for j in range(env.n_streams)]
    out = []
    for j in range(env.n_streams):
        zc, nz = _centered(cols[:, j], labels[j])
        r = (yc @ zc) / (ny * nz)
        grad = zc / (ny * nz) - r * yc / (ny * ny)
        out.append((j, float(np.clip(r, -1.0, 1.0)), grad))
    return out


def _column_labels(env: EnvelopeSet) -> list[str]:
    labels, k = [], 0
    for j in range(env.n_streams):
        if j == env.attended_index:
            labels.append("attended")
        else:
            labels.append(f"unattended[{k}]")
            k += 1
    return labels


def loss_pcc(yhat, env: EnvelopeSet, on_collapse: str = "raise") -> tuple[float, np.ndarray]:
    """Negative attended correlation and its gradient with respect to ``yhat``.

    With ``on_collapse="direction"`` a constant prediction scores 0 and gets
    the limiting descent direction instead of raising.
    """
    terms = _column_terms(yhat, env, on_collapse)
    _, rho, grad = terms[env.attended_index]
    return -rho, -grad


def loss_delta_pcc(yhat, env: EnvelopeSet, on_collapse: str = "raise") -> tuple[float, np.ndarray]:
    """-rho_a + mean_j rho_u,j and its gradient."""
    terms = _column_terms(yhat, env, on_collapse)
    a = env.attended_index
    unatt = [t for t in terms if t[0] != a]
    w = 1.0 / len(unatt)
    value = -terms[a][1] + w * sum(t[1] for t in unatt)
    grad = -terms[a][2] + w * sum(t[2] for t in unatt)
    return float(value), grad


def loss_negative_sum(yhat, env: EnvelopeSet, on_collapse: str = "raise") -> tuple[float, np.ndarray]:
    """-rho_a + sum_j rho_u,j.

    Ill-posed for N > 2: a decoder can lower it by anti-correlating with
    whatever all streams share. Kept only to demonstrate that failure.
    """
    terms = _column_terms(yhat, env, on_collapse)
    a = env.attended_index
    unatt = [t for t in terms if t[0] != a]
    value = -terms[a][1] + sum(t[1] for t in unatt)
    grad = -terms[a][2] + sum(t[2] for t in unatt)
    return float(value), grad


LossFn = Callable[..., "tuple[float, np.ndarray]"]


def loss_function(kind, experimental: bool = False) -> LossFn:
    if kind == NEG_SUM:
        if not experimental:
            raise ValueError("the negative-sum objective requires experimental=True")
        return loss_negative_sum
    kind = LossKind(kind)
    return {LossKind.PCC: loss_pcc, LossKind.DELTA_PCC: loss_delta_pcc}[kind]


def correlate_all(yhat, env: EnvelopeSet) -> CorrelationRecord:
    terms = _column_terms(yhat, env, "raise")
    a = env.attended_index
    return CorrelationRecord.from_values(terms[a][1], [t[1] for t in terms if t[0] != a])


def decoding_accuracy(records: Sequence[CorrelationRecord]) -> float:
    """Fraction of records where rho_a strictly beats every rho_u,j (ties lose)."""
    if len(records) == 0:
        raise EmptyInputError("no records to score")
    return sum(r.correct for r in records) / len(records)
