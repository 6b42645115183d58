"""Characteristic functions over pooled datasets.

Three model-value measures are provided:

``fisher_linear``
    Fisher information of Gaussian linear regression, ``sum_t |x_t|^2 / s2_t``
    with ``s2_t`` the row's noise variance.  For one feature this is the
    classic ``sum x^2 / sigma^2``; for ``d`` features it is the trace of
    ``X^T S^-1 X`` (a trace extension, not the full matrix).
``mi_bayes_linear``
    Mutual information between parameters and data under a Gaussian prior,
    ``0.5 * log(det(P) * det(P^-1 + X^T S^-1 X))``, natural log.
``fisher_logistic_trace``
    Trace of the logistic-regression Fisher matrix ``X^T W X`` at a fixed
    reference parameter, ``W = diag(p(1 - p))``.

Features may first be pushed through a fixed MLP (forward pass only).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import (
    BadConfig,
    DimensionMismatch,
    IoError,
    NonpositiveNoise,
    RaggedDimensions,
    SingularPrior,
    ValidationError,
)

KINDS = ("fisher_linear", "mi_bayes_linear", "fisher_logistic_trace")
ACTIVATIONS = ("relu", "sigmoid", "identity")


@dataclass(frozen=True, eq=False)
class PlayerDataset:
    """One player's rows: features ``X`` (m, d), targets ``y`` (m,), noise variances (m,)."""

    X: np.ndarray
    y: np.ndarray
    noise_var: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        s2 = np.asarray(self.noise_var, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or y.size != X.shape[0] or s2.size != X.shape[0]:
            raise RaggedDimensions(f"features {X.shape}, targets {y.shape} and noise {s2.shape} disagree")
        for name, a in (("features", X), ("targets", y), ("noise_var", s2)):
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"non-finite {name}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "noise_var", s2)

    @classmethod
    def empty(cls, d: int = 1) -> "PlayerDataset":
        return cls(np.zeros((0, d)), np.zeros(0), np.zeros(0))

    @property
    def rows(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def concat_datasets(parts: Sequence[PlayerDataset]) -> PlayerDataset:
    if not parts:
        raise ValidationError("nothing to concatenate")
    if len(parts) == 1:
        return parts[0]
    return PlayerDataset(
        np.concatenate([p.X for p in parts]),
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.noise_var for p in parts]),
    )


# ------------------------------------------------------------------- MLP


@dataclass(frozen=True, eq=False)
class Layer:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    act: str = "identity"

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.w, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if b.size != w.shape[0]:
            raise DimensionMismatch(f"layer bias has {b.size} entries for {w.shape[0]} outputs")
        if self.act not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.act!r}; expected one of {ACTIVATIONS}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True, eq=False)
class MLPWeights:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValidationError("an MLP needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].w.shape[1] != self.layers[k - 1].w.shape[0]:
                raise DimensionMismatch(
                    f"layer {k} expects {self.layers[k].w.shape[1]} inputs, "
                    f"layer {k - 1} produces {self.layers[k - 1].w.shape[0]}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].w.shape[0]

    @classmethod
    def from_dict(cls, doc: dict) -> "MLPWeights":
        try:
            return cls(tuple(Layer(lay["w"], lay["b"], lay.get("act", "identity")) for lay in doc["layers"]))
        except (KeyError, TypeError) as err:
            raise BadConfig(f"bad MLP weights document: {err}") from err

    def to_dict(self) -> dict:
        return {"layers": [{"w": lay.w.tolist(), "b": lay.b.tolist(), "act": lay.act} for lay in self.layers]}


def load_mlp(path: str | Path) -> MLPWeights:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as err:
        raise IoError(f"cannot read MLP weights {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise BadConfig(f"{path}: invalid JSON: {err}") from err
    return MLPWeights.from_dict(doc)


def _activate(h: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(h, 0.0)
    if act == "sigmoid":
        return expit(h)
    return h


def mlp_transform(features, weights: MLPWeights) -> np.ndarray:
    h = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if h.shape[1] != weights.in_dim:
        raise DimensionMismatch(f"MLP expects {weights.in_dim} features, got {h.shape[1]}")
    for lay in weights.layers:
        h = _activate(h @ lay.w.T + lay.b, lay.act)
    return h


# ------------------------------------------------------------- valuations


def _check_noise(data: PlayerDataset) -> None:
    if np.any(data.noise_var <= 0):
        t = int(np.flatnonzero(data.noise_var <= 0)[0])
        raise NonpositiveNoise(f"row {t} has noise variance {data.noise_var[t]}; must be > 0")


def fisher_linear(data: PlayerDataset) -> float:
    _check_noise(data)
    if data.rows == 0:
        return 0.0
    return float(np.sum(np.einsum("td,td->t", data.X, data.X) / data.noise_var))


def _prior_factor(prior_cov) -> np.ndarray:
    P = np.atleast_2d(np.asarray(prior_cov, dtype=np.float64))
    if P.shape[0] != P.shape[1] or not np.allclose(P, P.T, rtol=1e-12, atol=0):
        raise SingularPrior(f"prior covariance must be a symmetric square matrix, got shape {P.shape}")
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise SingularPrior("prior covariance is not positive definite") from None


def mutual_info_bayes_linear(data: PlayerDataset, prior_cov=None, *, prior_factor: np.ndarray | None = None) -> float:
    """Information gained about the weights: ``0.5 * log det(I + L^T X^T S^-1 X L)``
    where ``L L^T`` is the prior covariance (same value as the two-determinant
    form, but exactly 0 on empty data and never forms an inverse)."""
    L = _prior_factor(prior_cov) if prior_factor is None else prior_factor
    if data.dim != L.shape[0]:
        raise DimensionMismatch(f"prior is {L.shape[0]}-dimensional, features are {data.dim}-dimensional")
    _check_noise(data)
    if data.rows == 0:
        return 0.0
    Z = data.X @ L
    M = Z.T @ (Z / data.noise_var[:, None])
    M[np.diag_indices_from(M)] += 1.0
    return float(np.sum(np.log(np.diag(np.linalg.cholesky(M)))))


def with_bias(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def logistic_weight(p):
    """Per-row Fisher weight ``p (1 - p)`` of a logistic model."""
    p = np.asarray(p, dtype=np.float64)
    return p * (1.0 - p)


def predict_proba(X, theta, bias: bool = False) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if bias:
        X = with_bias(X)
    if X.shape[1] != theta.size:
        raise DimensionMismatch(f"theta has {theta.size} entries for {X.shape[1]} design columns")
    return expit(X @ theta)


def fisher_logistic_trace(data: PlayerDataset, theta_ref, bias: bool = False) -> float:
    theta = np.asarray(theta_ref, dtype=np.float64).reshape(-1)
    expected = data.dim + int(bias)
    if theta.size != expected:
        raise DimensionMismatch(f"theta has {theta.size} entries, expected {expected}")
    if data.rows == 0:
        return 0.0
    X = with_bias(data.X) if bias else data.X
    w = logistic_weight(expit(X @ theta))
    return float(np.sum(w * np.einsum("td,td->t", X, X)))


@dataclass(frozen=True, eq=False)
class ValuationSpec:
    kind: str
    prior_cov: np.ndarray | None = None
    theta_ref: np.ndarray | None = None
    bias: bool = False
    transform: MLPWeights | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadConfig(f"unknown valuation kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "mi_bayes_linear":
            if self.prior_cov is None:
                raise BadConfig("mi_bayes_linear needs prior_cov")
            object.__setattr__(self, "prior_cov", np.atleast_2d(np.asarray(self.prior_cov, dtype=np.float64)))
            _ = self.prior_factor
        if self.kind == "fisher_logistic_trace":
            if self.theta_ref is None:
                raise BadConfig("fisher_logistic_trace needs theta_ref")
            object.__setattr__(self, "theta_ref", np.asarray(self.theta_ref, dtype=np.float64).reshape(-1))

    @cached_property
    def prior_factor(self) -> np.ndarray:
        return _prior_factor(self.prior_cov)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "ValuationSpec":
        doc = dict(doc)
        unknown = set(doc) - {"kind", "prior_cov", "theta_ref", "bias", "transform"}
        if unknown:
            raise BadConfig(f"unknown valuation field(s): {sorted(unknown)}")
        transform = doc.get("transform")
        if isinstance(transform, str):
            path = Path(transform)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            transform = load_mlp(path)
        elif isinstance(transform, dict):
            transform = MLPWeights.from_dict(transform)
        if "kind" not in doc:
            raise BadConfig("valuation needs a 'kind'")
        return cls(doc["kind"], doc.get("prior_cov"), doc.get("theta_ref"), bool(doc.get("bias", False)), transform)

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.prior_cov is not None:
            out["prior_cov"] = self.prior_cov.tolist()
        if self.theta_ref is not None:
            out["theta_ref"] = self.theta_ref.tolist()
        if self.bias:
            out["bias"] = True
        if self.transform is not None:
            out["transform"] = self.transform.to_dict()
        return out


def prepare_datasets(datasets: Sequence[PlayerDataset], spec: ValuationSpec) -> list[PlayerDataset]:
    """Check players share a feature dimension and apply the spec's transform."""
    dims = {d.dim for d in datasets}
    if len(dims) > 1:
        raise RaggedDimensions(f"players have different feature dimensions {sorted(dims)}")
    if spec.transform is None:
        return list(datasets)
    return [PlayerDataset(mlp_transform(d.X, spec.transform), d.y, d.noise_var) for d in datasets]


def evaluate(spec: ValuationSpec, data: PlayerDataset) -> float:
    if spec.kind == "fisher_linear":
        return fisher_linear(data)
    if spec.kind == "mi_bayes_linear":
        return mutual_info_bayes_linear(data, prior_factor=spec.prior_factor)
    return fisher_logistic_trace(data, spec.theta_ref, spec.bias)
