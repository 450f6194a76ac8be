"""
Posterior predictive queries on fitted mixtures.

The functions here consume :class:`~catmix.core.CollapsedModel` objects
(single draws, pooled draws, or hand-built models) and never touch the
sampler, so they work equally on fitted and synthetic models.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from catmix.core import (
    DEFAULT_CELL_LIMIT,
    CategoricalSchema,
    CollapsedModel,
    Dataset,
    JointDistribution,
    MissingnessTable,
    as_generator,
)

__all__ = [
    "AugmentedModel",
    "ConstructionReport",
    "ImputationResult",
    "class_posterior",
    "construct_saturated_model",
    "correlation_matrix",
    "fisher_exact_2x2",
    "impute",
    "joint_distribution",
    "largest_remainder_counts",
    "pair_marginal",
    "pairwise_independence",
    "pool_draws",
    "predictive_cell",
    "saturated_model",
    "verify_construction",
]


@dataclass(frozen=True)
class ImputationResult:
    """A completed dataset plus the predictive vector of each filled cell.

    Attributes
    ----------
    completed : Dataset
        The input dataset with every missing cell replaced by a code in
        ``1 .. d_j``.
    cell_posteriors : dict
        Maps ``(row, column)`` of each originally missing cell to its
        averaged predictive probability vector over the codes
        ``1 .. d_j``.
    """

    completed: Dataset
    cell_posteriors: dict[tuple[int, int], np.ndarray]


def _as_draws(posterior) -> list[CollapsedModel]:
    """Accept a PosteriorSample, a model list, or a single model."""
    if isinstance(posterior, CollapsedModel):
        return [posterior]
    draws = getattr(posterior, "draws", posterior)
    draws = list(draws)
    if not draws:
        raise ValueError("need at least one posterior draw")
    cards = draws[0].schema.cardinalities
    for m in draws:
        if not isinstance(m, CollapsedModel):
            raise ValueError(f"expected CollapsedModel draws, got {type(m).__name__}")
        if m.schema.cardinalities != cards:
            raise ValueError("posterior draws disagree on cardinalities")
    return draws


def pool_draws(posterior) -> CollapsedModel:
    """Concatenate posterior draws into one mixture.

    Each draw's components enter with weight ``theta / n_draws``.  For
    any quantity that is linear in the joint distribution (joint tables,
    pair marginals and the moments behind the correlation matrix) the
    pooled model gives exactly the average over draws.
    """
    draws = _as_draws(posterior)
    theta = np.concatenate([m.theta for m in draws]) / len(draws)
    tilde = np.concatenate([m.tilde_psi for m in draws], axis=0)
    return CollapsedModel(draws[0].schema, theta, tilde)


# ---------------------------------------------------------------------------
# Class posteriors and imputation
# ---------------------------------------------------------------------------

def class_posterior(row, model: CollapsedModel) -> np.ndarray:
    """Posterior component probabilities for one partially observed row.

    Parameters
    ----------
    row : array-like of int, shape (p,)
        Codes in ``0 .. d_j``; zeros mark unobserved cells and
        contribute no evidence.  An all-zero row returns the mixture
        weights themselves.
    model : CollapsedModel

    Returns
    -------
    ndarray, shape (k,)

    Raises
    ------
    ValueError
        If the row has probability zero under every component.
    """
    row = _check_row(row, model)
    logpost = _log_class_posteriors(model, row[None, :])
    return np.exp(logpost[0])


def predictive_cell(row, j: int, model: CollapsedModel) -> np.ndarray:
    """Predictive distribution of one missing cell given the observed row.

    Parameters
    ----------
    row : array-like of int, shape (p,)
    j : int
        Variable index; ``row[j]`` must be 0 (missing).
    model : CollapsedModel

    Returns
    -------
    ndarray, shape (d_j,)
        ``P(x_j = c | observed cells)`` for codes ``c = 1 .. d_j``.
    """
    row = _check_row(row, model)
    if not 0 <= j < model.n_variables:
        raise ValueError(f"variable index {j} out of range")
    if row[j] != 0:
        raise ValueError(
            f"variable {j} is observed (code {row[j]}); the predictive "
            "is only defined for missing cells"
        )
    post = class_posterior(row, model)
    d = model.schema.cardinalities[j]
    return post @ model.tilde_psi[:, j, :d]


def impute(data: Dataset, posterior, rule: str = "argmax",
           seed=None) -> ImputationResult:
    """Fill every missing cell of a dataset from the posterior predictive.

    For each missing cell the predictive vector is computed under every
    retained draw separately (each draw normalizes its own component
    posterior) and the vectors are averaged.  The fill-in rule is then
    either the most probable code, ties going to the lowest code, or a
    random code drawn from the averaged predictive.

    Parameters
    ----------
    data : Dataset
    posterior : PosteriorSample, sequence of CollapsedModel, or CollapsedModel
    rule : {"argmax", "sample"}
    seed : int, SeedSequence or Generator, optional
        Only used by the "sample" rule.  Cells are visited in row-major
        order, so a fixed seed reproduces the completion.

    Returns
    -------
    ImputationResult
    """
    if rule not in ("argmax", "sample"):
        raise ValueError(f"rule must be 'argmax' or 'sample', got {rule!r}")
    draws = _as_draws(posterior)
    if draws[0].schema.cardinalities != data.schema.cardinalities:
        raise ValueError(
            f"model cardinalities {draws[0].schema.cardinalities} do not "
            f"match the dataset's {data.schema.cardinalities}"
        )
    cells = np.asarray(data.cells)
    miss = cells == 0
    if not miss.any():
        return ImputationResult(data, {})

    hit_rows = np.nonzero(miss.any(axis=1))[0]
    sub = cells[hit_rows]
    p = data.n_variables
    width = data.schema.max_cardinality
    acc = np.zeros((hit_rows.size, p, width))
    for m in draws:
        post = np.exp(_log_class_posteriors(m, sub))
        acc += np.einsum("mk,kjc->mjc", post, m.tilde_psi)
    acc /= len(draws)

    rng = as_generator(seed) if rule == "sample" else None
    completed = cells.copy()
    cell_posteriors: dict[tuple[int, int], np.ndarray] = {}
    cards = data.schema.cardinalities
    for local, i in enumerate(hit_rows):
        for j in np.nonzero(miss[i])[0]:
            vec = acc[local, j, : cards[j]]
            vec = vec / vec.sum()
            vec.setflags(write=False)
            cell_posteriors[(int(i), int(j))] = vec
            if rule == "argmax":
                completed[i, j] = int(np.argmax(vec)) + 1
            else:
                completed[i, j] = int(rng.choice(cards[j], p=vec)) + 1
    return ImputationResult(data.replace_cells(completed), cell_posteriors)


def _log_class_posteriors(model: CollapsedModel, cells: np.ndarray) -> np.ndarray:
    """Row-normalized log component posteriors for a batch of rows.

    ``cells`` is (m, p) with zeros marking unobserved entries.  Returns
    an (m, k) array whose rows are log probability vectors.
    """
    with np.errstate(divide="ignore"):
        log_theta = np.log(model.theta)
        log_tilde = np.log(model.tilde_psi)
    # (p, D, k) so the row codes can index the first two axes
    by_var = np.moveaxis(log_tilde, 0, 2)
    idx = np.maximum(cells - 1, 0)
    gathered = by_var[np.arange(cells.shape[1])[None, :], idx]  # (m, p, k)
    contrib = np.where((cells > 0)[:, :, None], gathered, 0.0)
    logpost = log_theta[None, :] + contrib.sum(axis=1)
    norm = logsumexp(logpost, axis=1, keepdims=True)
    if np.isneginf(norm).any():
        bad = int(np.nonzero(np.isneginf(norm.ravel()))[0][0])
        raise ValueError(
            f"row {bad} has probability zero under every component"
        )
    return logpost - norm


def _check_row(row, model: CollapsedModel) -> np.ndarray:
    row = np.asarray(row, dtype=np.int64)
    cards = model.schema.codes_array()
    if row.shape != (model.n_variables,):
        raise ValueError(
            f"row has shape {row.shape}, expected ({model.n_variables},)"
        )
    if (row < 0).any() or (row > cards).any():
        raise ValueError("row codes must lie in 0 .. d_j for each variable")
    return row


# ---------------------------------------------------------------------------
# Joint, marginal and correlation summaries
# ---------------------------------------------------------------------------

def joint_distribution(model: CollapsedModel,
                       cell_limit: int = DEFAULT_CELL_LIMIT) -> JointDistribution:
    """Dense joint probability table implied by the mixture.

    ``table[c1 - 1, ..., cp - 1] = sum_h theta_h prod_j tilde_psi[h, j, cj - 1]``.

    Raises
    ------
    ValueError
        If the table would exceed ``cell_limit`` cells; use
        :func:`pair_marginal` for high-dimensional models instead.
    """
    schema = model.schema
    if schema.n_cells() > cell_limit:
        raise ValueError(
            f"joint table would hold {schema.n_cells()} cells "
            f"(limit {cell_limit}); query pair_marginal instead"
        )
    cards = schema.cardinalities
    table = np.zeros(cards)
    for h in range(model.k):
        block = np.asarray(model.theta[h])
        for j, d in enumerate(cards):
            block = np.multiply.outer(block, model.tilde_psi[h, j, :d])
        table += block
    return JointDistribution(schema, table, cell_limit)


def pair_marginal(model: CollapsedModel, j1: int, j2: int) -> np.ndarray:
    """Joint probability table of two variables, shape (d_j1, d_j2).

    Computed from the component structure directly, without building
    the full joint.
    """
    p = model.n_variables
    if not (0 <= j1 < p and 0 <= j2 < p):
        raise ValueError(f"variable indices ({j1}, {j2}) out of range")
    if j1 == j2:
        raise ValueError("pair_marginal needs two distinct variables")
    d1 = model.schema.cardinalities[j1]
    d2 = model.schema.cardinalities[j2]
    return np.einsum(
        "h,hc,hd->cd",
        model.theta,
        model.tilde_psi[:, j1, :d1],
        model.tilde_psi[:, j2, :d2],
    )


def correlation_matrix(model: CollapsedModel) -> np.ndarray:
    """Pearson correlations of the integer-coded variables.

    Codes ``1 .. d_j`` are treated as numeric values; for binary
    variables this is the phi coefficient.  A variable with zero
    variance gets correlation 0 with everything (its diagonal entry
    stays 1), which keeps downstream gap sums finite.
    """
    cards = model.schema.codes_array()
    width = model.schema.max_cardinality
    codes = np.arange(1, width + 1, dtype=np.float64)
    comp_mean = model.tilde_psi @ codes          # (k, p)
    comp_sq = model.tilde_psi @ codes ** 2       # (k, p)
    m1 = model.theta @ comp_mean                 # E[X_j]
    m2 = model.theta @ comp_sq                   # E[X_j^2]
    cross = comp_mean.T @ (model.theta[:, None] * comp_mean)
    var = np.maximum(m2 - m1 ** 2, 0.0)
    cov = cross - np.outer(m1, m1)
    denom = np.sqrt(np.outer(var, var))
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(denom > 0, cov / np.where(denom > 0, denom, 1.0), 0.0)
    rho = np.clip((rho + rho.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return rho


# ---------------------------------------------------------------------------
# Exact independence testing
# ---------------------------------------------------------------------------

def fisher_exact_2x2(table) -> float:
    """Two-sided Fisher exact test p-value for a 2x2 count table.

    All tables sharing the observed margins whose hypergeometric
    probability does not exceed that of the observed table contribute
    to the p-value.  The computation is exact integer arithmetic, so
    probability ties are decided exactly rather than within a float
    tolerance.

    Parameters
    ----------
    table : array-like of int, shape (2, 2)

    Returns
    -------
    float
        p-value in (0, 1].  A table with a zero margin carries no
        evidence either way and returns 1.0 by convention.
    """
    t = np.asarray(table)
    if t.shape != (2, 2):
        raise ValueError(f"table must be 2x2, got shape {t.shape}")
    if not np.issubdtype(t.dtype, np.integer):
        if not np.all(np.isfinite(t)) or not np.all(t == np.floor(t)):
            raise ValueError("table entries must be nonnegative integers")
        t = t.astype(np.int64)
    if (t < 0).any():
        raise ValueError("table entries must be nonnegative integers")
    a, b = int(t[0, 0]), int(t[0, 1])
    c, d = int(t[1, 0]), int(t[1, 1])
    r1, r2 = a + b, c + d
    c1 = a + c
    n = r1 + r2
    if n < 1:
        raise ValueError("table total must be at least 1")
    if min(r1, r2, c1, b + d) == 0:
        return 1.0
    lo = max(0, c1 - r2)
    hi = min(r1, c1)
    observed = comb(r1, a) * comb(r2, c1 - a)
    acc = 0
    for x in range(lo, hi + 1):
        weight = comb(r1, x) * comb(r2, c1 - x)
        if weight <= observed:
            acc += weight
    return acc / comb(n, c1)


def largest_remainder_counts(probs, n: int) -> np.ndarray:
    """Round ``n * probs`` to integers that sum exactly to ``n``.

    Every cell gets the floor of its scaled value; the leftover units
    go to the cells with the largest fractional parts, ties broken by
    position (row-major first).
    """
    probs = np.asarray(probs, dtype=np.float64)
    if (probs < 0).any() or probs.sum() <= 0:
        raise ValueError("probs must be nonnegative with positive sum")
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    scaled = probs / probs.sum() * n
    base = np.floor(scaled).astype(np.int64)
    short = int(n - base.sum())
    if short > 0:
        frac = (scaled - base).ravel()
        order = np.lexsort((np.arange(frac.size), -frac))
        flat = base.ravel()
        flat[order[:short]] += 1
        base = flat.reshape(probs.shape)
    return base


def pairwise_independence(model: CollapsedModel, n: int) -> list[tuple[int, int, float]]:
    """Fisher exact tests for every variable pair of a binary model.

    The model's pair marginal is converted to a 2x2 count table of
    total ``n`` by largest-remainder rounding and tested.

    Parameters
    ----------
    model : CollapsedModel
        All variables must be binary.
    n : int
        Effective sample size behind the count tables; typically the
        number of rows the model was fitted on.

    Returns
    -------
    list of (j1, j2, p_value)
        Every pair ``j1 < j2`` (0-based), sorted by ascending p-value;
        ties sorted by the index pair.
    """
    for j, d in enumerate(model.schema.cardinalities):
        if d != 2:
            raise ValueError(
                f"variable {j} has cardinality {d}; the 2x2 test "
                "requires binary variables"
            )
    if n < 1:
        raise ValueError(f"effective sample size must be >= 1, got {n}")
    out = []
    p = model.n_variables
    for j1 in range(p):
        for j2 in range(j1 + 1, p):
            counts = largest_remainder_counts(pair_marginal(model, j1, j2), n)
            out.append((j1, j2, fisher_exact_2x2(counts)))
    out.sort(key=lambda r: (r[2], r[0], r[1]))
    return out


# ---------------------------------------------------------------------------
# Saturated construction (representability oracle)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentedModel:
    """A mixture whose category vectors still include the missing code.

    One component per represented cell combination: component ``h``
    describes the complete row ``cells[h]`` and places the cell's
    missingness probability on code 0.

    Attributes
    ----------
    schema : CategoricalSchema
    theta : ndarray, shape (k,)
    psi : ndarray, shape (k, p, D + 1)
        Probabilities over codes ``0 .. d_j``, zero padded.
    cells : ndarray of int, shape (k, p)
        The complete category combination each component represents.
    """

    schema: CategoricalSchema
    theta: np.ndarray
    psi: np.ndarray
    cells: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        psi = np.asarray(self.psi, dtype=np.float64)
        cells = np.asarray(self.cells, dtype=np.int64)
        k = theta.size
        p = self.schema.n_variables
        if psi.shape != (k, p, self.schema.max_cardinality + 1):
            raise ValueError("psi shape inconsistent with theta and schema")
        if cells.shape != (k, p):
            raise ValueError("cells shape inconsistent with theta and schema")
        if (theta < 0).any() or abs(theta.sum() - 1.0) > 1e-9:
            raise ValueError("theta must be nonnegative and sum to 1")
        for j, d in enumerate(self.schema.cardinalities):
            sums = psi[:, j, : d + 1].sum(axis=1)
            if k and np.abs(sums - 1.0).max() > 1e-9:
                raise ValueError(f"psi rows of variable {j} do not sum to 1")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "cells", cells)

    @property
    def k(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class ConstructionReport:
    """Reproduction errors of a saturated construction.

    ``pi_error`` is the largest absolute deviation between the target
    joint table and the one implied by the rescaled construction;
    ``q_error`` is the largest absolute deviation between the target
    missingness probabilities and the constructed ones, over the
    represented cells.
    """

    pi_error: float
    q_error: float


def saturated_model(pi: JointDistribution) -> CollapsedModel:
    """Exact mixture representation of a joint table.

    One point-mass component per cell with positive probability; useful
    for feeding exact ground-truth joints to model-based summaries such
    as :func:`correlation_matrix`.
    """
    schema = pi.schema
    positive = np.argwhere(pi.table > 0)
    theta = pi.table[tuple(positive.T)]
    tilde = np.zeros((positive.shape[0], schema.n_variables,
                      schema.max_cardinality))
    for h, idx in enumerate(positive):
        tilde[h, np.arange(schema.n_variables), idx] = 1.0
    return CollapsedModel(schema, theta, tilde)


def construct_saturated_model(pi: JointDistribution,
                              q: MissingnessTable) -> AugmentedModel:
    """Build the one-component-per-cell mixture matching ``pi`` and ``q``.

    For every cell combination ``(c1, ..., cp)`` with positive joint
    probability, a component is created with weight ``pi[c1, ..., cp]``.
    Its vector for variable ``j`` places the cell's missingness
    probability on code 0, the remainder on ``cj``, and nothing
    anywhere else.  Rescaling such a model reproduces ``pi`` exactly,
    which is what :func:`verify_construction` checks.
    """
    if pi.schema.cardinalities != q.schema.cardinalities:
        raise ValueError("joint table and missingness table schemas differ")
    schema = pi.schema
    p = schema.n_variables
    width = schema.max_cardinality + 1

    positive = np.argwhere(pi.table > 0)
    k = positive.shape[0]
    theta = pi.table[tuple(positive.T)]
    psi = np.zeros((k, p, width))
    for h, idx in enumerate(positive):
        for j in range(p):
            rate = q.q[(j, *idx)]
            psi[h, j, 0] = rate
            psi[h, j, idx[j] + 1] = 1.0 - rate
    return AugmentedModel(schema, theta, psi, positive + 1)


def verify_construction(augmented: AugmentedModel, pi: JointDistribution,
                        q: MissingnessTable) -> ConstructionReport:
    """Measure how well a saturated construction reproduces its targets.

    The augmented model is rescaled exactly like a chain state (divide
    the observable mass of each vector by one minus its missing mass),
    the implied joint table is rebuilt, and both it and the implied
    missingness probabilities are compared to the targets.

    Returns
    -------
    ConstructionReport
        Maximum absolute deviations; both are 0.0 for the exact
        construction.
    """
    if pi.schema.cardinalities != q.schema.cardinalities:
        raise ValueError("joint table and missingness table schemas differ")
    missing_mass = augmented.psi[:, :, 0]
    if (missing_mass >= 1.0 - 1e-12).any():
        raise ValueError(
            "a component assigns all mass to the missing code and "
            "cannot be rescaled"
        )
    tilde = augmented.psi[:, :, 1:] / (1.0 - missing_mass[:, :, None])
    model = CollapsedModel(augmented.schema, augmented.theta, tilde)
    implied = joint_distribution(model)
    pi_error = float(np.abs(implied.table - pi.table).max())

    q_error = 0.0
    for h in range(augmented.k):
        idx = tuple(augmented.cells[h] - 1)
        for j in range(augmented.schema.n_variables):
            dev = abs(float(missing_mass[h, j]) - float(q.q[(j, *idx)]))
            q_error = max(q_error, dev)
    return ConstructionReport(pi_error=pi_error, q_error=q_error)
