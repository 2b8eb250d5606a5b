"""ELBO evaluation, entropy-sum right-hand sides, and their gap.

The ELBO is computed exactly, never by Monte Carlo: finite-state summation
for mixtures and sigmoid belief nets (all 2^H states enumerated), closed-form
Gaussian moment algebra for the linear-Gaussian models. It is split into
three terms,

    elbo = f1 - f2 - f3
    f1 = -(1/N) sum_n E_q[log q]          (average variational entropy)
    f2 = -(1/N) sum_n E_q[log p(z)]       (prior cross-entropy)
    f3 = -(1/N) sum_n E_q[log p(x_n|z)]   (noise cross-entropy)

and compared against the entropy-sum expression

    rhs = (1/N) sum_n H[q_n] - H[prior] - E_qbar[ H[p(x|z)] ],

whose gap |elbo - rhs| closes at stationary points of training. The pseudo
variant drops the observation base measure from the noise log-densities and
replaces entropies with their base-measure-reweighted counterparts, which
stay closed-form even for Poisson observables; the two variants differ by
exactly the data's mean log base measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import logsumexp, xlogy

from . import families as fam
from .errors import IncompatibilityError, UnsupportedModelError
from .models import (
    FiniteStates,
    GenerativeModel,
    fa_components,
    ppca_components,
)

__all__ = [
    "CategoricalTable",
    "EnumeratedTable",
    "GaussianMoments",
    "BernoulliMeanField",
    "VariationalState",
    "ObjectiveReport",
    "AggregatedPosterior",
    "aggregated_posterior",
    "exact_posterior",
    "elbo_terms",
    "pseudo_elbo_terms",
    "elbo_kl_form",
    "entropy_sum_rhs",
    "pseudo_entropy_sum_rhs",
    "marginal_loglik",
    "pseudo_loglik",
    "mean_log_base_measure",
    "stationarity_gap",
]

_ROW_NORM_TOL = 1e-9


def _check_rows_normalized(p: np.ndarray, what: str):
    if p.ndim != 2:
        raise ValueError(f"{what} must be 2-D")
    if p.shape[0] == 0:
        return
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError(f"{what} entries must lie in [0, 1]")
    if np.max(np.abs(p.sum(axis=1) - 1.0)) > _ROW_NORM_TOL:
        raise ValueError(f"{what} rows must sum to 1")


@dataclass(frozen=True)
class CategoricalTable:
    """Per-point responsibilities over mixture components, shape (N, C)."""

    resp: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "resp", np.asarray(self.resp, dtype=float))
        _check_rows_normalized(self.resp, "responsibilities")


@dataclass(frozen=True)
class EnumeratedTable:
    """Per-point probabilities over all enumerated latent states, shape (N, S)."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))
        _check_rows_normalized(self.probs, "state probabilities")


@dataclass(frozen=True)
class GaussianMoments:
    """Gaussian posteriors N(means[n], cov) with one shared covariance.

    Exact for the linear-Gaussian models, where the posterior covariance does
    not depend on the data point.
    """

    means: np.ndarray  # (N, H)
    cov: np.ndarray  # (H, H), symmetric positive definite

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "cov", cov)
        if means.ndim != 2:
            raise ValueError("means must be (N, H)")
        h = means.shape[1]
        if cov.shape != (h, h) or not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("cov must be symmetric (H, H)")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("cov must be positive definite") from None


@dataclass(frozen=True)
class BernoulliMeanField:
    """Independent-Bernoulli variational factors, shape (N, H)."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if p.ndim != 2 or np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("mean-field probabilities must be (N, H) in [0, 1]")


VariationalState = Union[CategoricalTable, EnumeratedTable, GaussianMoments, BernoulliMeanField]


@dataclass(frozen=True)
class ObjectiveReport:
    f1: float
    f2: float
    f3: float
    elbo: float  # = f1 - f2 - f3
    entropy_sum: float
    gap: float  # = |elbo - entropy_sum|
    variant: str  # standard | pseudo


@dataclass(frozen=True)
class AggregatedPosterior:
    """Average of the per-point variational distributions."""

    kind: str
    weights: np.ndarray | None = None  # finite kinds: (C,) or (S,)
    means: np.ndarray | None = None  # gaussian kind: equal-weight mixture
    cov: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Data tables shared by the finite-latent paths.


def _check_data(model: GenerativeModel, data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != model.noise.family.data_dim:
        raise ValueError(
            f"data must be (N, {model.noise.family.data_dim}), got {data.shape}"
        )
    return data


def _finite_states(model: GenerativeModel) -> list:
    if not isinstance(model.latent_support, FiniteStates):
        raise IncompatibilityError(f"{model.model_kind} has no finite latent states")
    return list(model.latent_support.states)


def _data_stats(model: GenerativeModel, data: np.ndarray):
    noise = model.noise.family
    if len(data) == 0:
        return np.zeros((0, noise.natural_dim)), np.zeros(0)
    return fam.batch_sufficient_stats(noise, data), fam.batch_log_base_measure(noise, data)


def _state_tables(model: GenerativeModel, states):
    theta = model.noise.params
    etas = np.stack([model.noise.eta(s, theta) for s in states])
    log_parts = np.array([fam.log_partition(model.noise.family, e) for e in etas])
    zeta = model.prior.zeta(model.prior.params)
    log_prior = np.array(
        [fam.log_density(model.prior.family, zeta, s) for s in states]
    )
    return etas, log_parts, log_prior


def _pseudo_loglik_matrix(t, etas, log_parts):
    # (N, S) log densities without the base measure: T(x).eta - A(eta).
    return t @ etas.T - log_parts


def _as_state_table(model: GenerativeModel, q: VariationalState) -> np.ndarray:
    """Probabilities over the model's finite states, shape (N, S)."""
    states = _finite_states(model)
    s_count = len(states)
    if isinstance(q, CategoricalTable):
        if model.model_kind != "ef_mixture" or q.resp.shape[1] != s_count:
            raise IncompatibilityError("responsibility table does not match the model")
        return q.resp
    if isinstance(q, EnumeratedTable):
        if q.probs.shape[1] != s_count:
            raise IncompatibilityError("enumerated table does not match the state count")
        return q.probs
    if isinstance(q, BernoulliMeanField):
        state_matrix = np.asarray(model.latent_support.states, dtype=float)
        if state_matrix.ndim != 2 or q.probs.shape[1] != state_matrix.shape[1]:
            raise IncompatibilityError("mean-field factors do not match the latent count")
        # Product-Bernoulli mass on every enumerated state.
        p = q.probs
        log_p = np.log(np.clip(p, 1e-300, None))
        log_1mp = np.log(np.clip(1.0 - p, 1e-300, None))
        log_mass = log_p @ state_matrix.T + log_1mp @ (1.0 - state_matrix).T
        return np.exp(log_mass)
    raise IncompatibilityError(f"unsupported variational state {type(q).__name__}")


def _entropy_rows(table: np.ndarray) -> np.ndarray:
    return -xlogy(table, table).sum(axis=1)


# ---------------------------------------------------------------------------
# Gaussian-moments path (linear-Gaussian models).


def _gaussian_model_parts(model: GenerativeModel):
    """Returns (W, mu, noise_variances (D,), tau) for ppca / simple_fa."""
    if model.model_kind == "ppca":
        w, mu, s2, tau = ppca_components(model)
        return w, mu, np.full(w.shape[0], s2), tau
    if model.model_kind == "simple_fa":
        wv, s2s, tau = fa_components(model)
        return wv[:, None], np.zeros(wv.size), s2s, tau
    raise IncompatibilityError(
        f"Gaussian variational moments require a linear-Gaussian model, got {model.model_kind}"
    )


def _gaussian_terms(model: GenerativeModel, data: np.ndarray, q: GaussianMoments):
    w, mu, s2s, tau = _gaussian_model_parts(model)
    n, h = q.means.shape
    if h != w.shape[1]:
        raise IncompatibilityError("latent dimension mismatch")
    if len(data) != n:
        raise ValueError("data and variational state disagree on N")
    sign, logdet = np.linalg.slogdet(q.cov)
    if sign <= 0:
        raise ValueError("covariance must be positive definite")
    f1 = 0.5 * h * math.log(2.0 * math.pi * math.e) + 0.5 * logdet
    tr_s = float(np.trace(q.cov))
    mean_sq = float(np.mean(np.sum(q.means**2, axis=1)))
    f2 = 0.5 * (tr_s + mean_sq) / tau + 0.5 * h * math.log(2.0 * math.pi * tau)
    resid = data - q.means @ w.T - mu
    quad_per_dim = np.mean(resid**2, axis=0) + np.einsum("dh,hk,dk->d", w, q.cov, w)
    f3 = float(
        np.sum(0.5 * np.log(2.0 * math.pi * s2s) + 0.5 * quad_per_dim / s2s)
    )
    return f1, f2, f3


def _gaussian_entropy_sum(model: GenerativeModel, q: GaussianMoments) -> float:
    w, _, s2s, tau = _gaussian_model_parts(model)
    h = q.means.shape[1]
    _, logdet = np.linalg.slogdet(q.cov)
    avg_q_entropy = 0.5 * h * math.log(2.0 * math.pi * math.e) + 0.5 * logdet
    prior_entropy = 0.5 * h * math.log(2.0 * math.pi * math.e * tau)
    noise_entropy = float(np.sum(0.5 * np.log(2.0 * math.pi * math.e * s2s)))
    return avg_q_entropy - prior_entropy - noise_entropy


# ---------------------------------------------------------------------------
# Public operations.


def exact_posterior(model: GenerativeModel, data) -> VariationalState:
    """The model's exact per-point posterior in the matching representation."""
    data = _check_data(model, data)
    if isinstance(model.latent_support, FiniteStates):
        states = _finite_states(model)
        t, log_h = _data_stats(model, data)
        etas, log_parts, log_prior = _state_tables(model, states)
        scores = _pseudo_loglik_matrix(t, etas, log_parts) + log_prior
        table = np.exp(scores - logsumexp(scores, axis=1, keepdims=True))
        if model.model_kind == "ef_mixture":
            return CategoricalTable(table)
        return EnumeratedTable(table)
    w, mu, s2s, tau = _gaussian_model_parts(model)
    h = w.shape[1]
    precision = (w.T / s2s) @ w + np.eye(h) / tau
    cov = np.linalg.inv(precision)
    cov = 0.5 * (cov + cov.T)
    means = ((data - mu) / s2s) @ w @ cov
    return GaussianMoments(means, cov)


def aggregated_posterior(q: VariationalState) -> AggregatedPosterior:
    if isinstance(q, CategoricalTable):
        return AggregatedPosterior("categorical_table", weights=q.resp.mean(axis=0))
    if isinstance(q, EnumeratedTable):
        return AggregatedPosterior("enumerated_table", weights=q.probs.mean(axis=0))
    if isinstance(q, BernoulliMeanField):
        return AggregatedPosterior("bernoulli_mean_field", weights=q.probs.mean(axis=0))
    if isinstance(q, GaussianMoments):
        return AggregatedPosterior("gaussian_moments", means=q.means, cov=q.cov)
    raise IncompatibilityError(f"unsupported variational state {type(q).__name__}")


def _finite_elbo_terms(model, data, q, pseudo: bool):
    states = _finite_states(model)
    table = _as_state_table(model, q)
    if len(data) != table.shape[0]:
        raise ValueError("data and variational state disagree on N")
    t, log_h = _data_stats(model, data)
    etas, log_parts, log_prior = _state_tables(model, states)
    ll = _pseudo_loglik_matrix(t, etas, log_parts)
    if not pseudo:
        ll = ll + log_h[:, None]
    f1 = float(np.mean(_entropy_rows(table)))
    f2 = float(-np.mean(table @ log_prior))
    f3 = float(-np.mean(np.sum(table * ll, axis=1)))
    return f1, f2, f3


def _natural_entropy(family, n) -> float:
    """Standard entropy evaluated from natural parameters.

    Unit-base-measure families take the -n.A'(n) + A(n) form, which equals
    their entropy and cannot saturate out of the standard domain the way a
    from_natural round trip can (a Bernoulli with |n| > ~37 maps to exactly
    0 or 1 in floats). Poisson keeps the truncated-series entropy.
    """
    if family.base_measure_kind == "unit_constant":
        return fam.pseudo_entropy(family, n)
    return fam.entropy(family, fam.from_natural(family, n))


def _entropy_sum_finite(model, q, pseudo: bool) -> float:
    states = _finite_states(model)
    table = _as_state_table(model, q)
    etas, _, _ = _state_tables(model, states)
    avg_q_entropy = float(np.mean(_entropy_rows(table)))
    zeta = model.prior.zeta(model.prior.params)
    if pseudo:
        prior_entropy = fam.pseudo_entropy(model.prior.family, zeta)
        noise_entropies = np.array(
            [fam.pseudo_entropy(model.noise.family, e) for e in etas]
        )
    else:
        prior_entropy = _natural_entropy(model.prior.family, zeta)
        noise_entropies = np.array(
            [_natural_entropy(model.noise.family, e) for e in etas]
        )
    qbar = table.mean(axis=0)
    return avg_q_entropy - prior_entropy - float(qbar @ noise_entropies)


def entropy_sum_rhs(model: GenerativeModel, q: VariationalState) -> float:
    """Average variational entropy minus prior entropy minus expected noise entropy."""
    if isinstance(q, GaussianMoments):
        return _gaussian_entropy_sum(model, q)
    return _entropy_sum_finite(model, q, pseudo=False)


def pseudo_entropy_sum_rhs(model: GenerativeModel, q: VariationalState) -> float:
    """Entropy-sum expression with base-measure-reweighted entropies.

    The latent-side families here all carry unit base measures, so the
    variational term is the plain entropy; only the noise term changes.
    """
    if isinstance(q, GaussianMoments):
        return _gaussian_entropy_sum(model, q)
    return _entropy_sum_finite(model, q, pseudo=True)


def _report(model, data, q, pseudo: bool) -> ObjectiveReport:
    data = _check_data(model, data)
    if isinstance(q, GaussianMoments):
        f1, f2, f3 = _gaussian_terms(model, data, q)
        rhs = _gaussian_entropy_sum(model, q)
    else:
        f1, f2, f3 = _finite_elbo_terms(model, data, q, pseudo)
        rhs = _entropy_sum_finite(model, q, pseudo)
    elbo = f1 - f2 - f3
    return ObjectiveReport(
        f1=f1,
        f2=f2,
        f3=f3,
        elbo=elbo,
        entropy_sum=rhs,
        gap=abs(elbo - rhs),
        variant="pseudo" if pseudo else "standard",
    )


def elbo_terms(model: GenerativeModel, data, q: VariationalState) -> ObjectiveReport:
    """Exact three-term ELBO evaluation with the entropy-sum comparison."""
    return _report(model, data, q, pseudo=False)


def pseudo_elbo_terms(model: GenerativeModel, data, q: VariationalState) -> ObjectiveReport:
    """ELBO under the reweighted observation measure (base measure dropped)."""
    return _report(model, data, q, pseudo=True)


def elbo_kl_form(model: GenerativeModel, data, q: VariationalState) -> float:
    """Expected log-likelihood minus KL(q || prior); equals elbo_terms().elbo."""
    data = _check_data(model, data)
    if isinstance(q, GaussianMoments):
        w, mu, s2s, tau = _gaussian_model_parts(model)
        h = q.means.shape[1]
        _, logdet = np.linalg.slogdet(q.cov)
        tr_s = float(np.trace(q.cov))
        mean_sq = float(np.mean(np.sum(q.means**2, axis=1)))
        kl = 0.5 * ((tr_s + mean_sq) / tau - h + h * math.log(tau) - logdet)
        f1, f2, f3 = _gaussian_terms(model, data, q)
        return -f3 - kl
    states = _finite_states(model)
    table = _as_state_table(model, q)
    t, log_h = _data_stats(model, data)
    etas, log_parts, log_prior = _state_tables(model, states)
    ll = _pseudo_loglik_matrix(t, etas, log_parts) + log_h[:, None]
    expected_ll = float(np.mean(np.sum(table * ll, axis=1)))
    kl_rows = xlogy(table, table).sum(axis=1) - table @ log_prior
    return expected_ll - float(np.mean(kl_rows))


def mean_log_base_measure(model: GenerativeModel, data) -> float:
    """(1/N) sum_n log h(x_n) under the model's observation family."""
    data = _check_data(model, data)
    if len(data) == 0:
        return 0.0
    return float(np.mean(fam.batch_log_base_measure(model.noise.family, data)))


def marginal_loglik(model: GenerativeModel, data) -> float:
    """(1/N) sum_n log p(x_n) by exact marginalization.

    Finite sums for finite-latent models, the Gaussian marginal for the
    linear-Gaussian ones; anything else is unsupported.
    """
    data = _check_data(model, data)
    if len(data) == 0:
        raise ValueError("marginal log-likelihood of an empty dataset")
    if isinstance(model.latent_support, FiniteStates):
        states = _finite_states(model)
        t, log_h = _data_stats(model, data)
        etas, log_parts, log_prior = _state_tables(model, states)
        scores = _pseudo_loglik_matrix(t, etas, log_parts) + log_prior + log_h[:, None]
        return float(np.mean(logsumexp(scores, axis=1)))
    if model.model_kind in ("ppca", "simple_fa"):
        w, mu, s2s, tau = _gaussian_model_parts(model)
        d = w.shape[0]
        cov = tau * (w @ w.T) + np.diag(s2s)
        chol = np.linalg.cholesky(cov)
        centered = data - mu
        solved = np.linalg.solve(chol, centered.T)
        quad = np.mean(np.sum(solved**2, axis=0))
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        return float(-0.5 * (d * math.log(2.0 * math.pi) + logdet + quad))
    raise UnsupportedModelError(
        f"{model.model_kind} admits no exact marginal likelihood here"
    )


def pseudo_loglik(model: GenerativeModel, data) -> float:
    """Marginal log-likelihood under the reweighted observation measure.

    Differs from the standard one by the parameter-free constant
    (1/N) sum_n log h(x_n).
    """
    return marginal_loglik(model, data) - mean_log_base_measure(model, data)


def stationarity_gap(model: GenerativeModel, data, q: VariationalState):
    """(|elbo - entropy sum|, |pseudo elbo - pseudo entropy sum|), absolute."""
    std = elbo_terms(model, data, q)
    pse = pseudo_elbo_terms(model, data, q)
    return std.gap, pse.gap
