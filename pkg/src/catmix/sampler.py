"""
Collapsed Gibbs sampler for the mixture of product multinomials.

Each sweep visits the rows in order.  A row is first detached from its
component (empty components disappear immediately); it is then
reassigned, choosing an existing component ``h`` with probability
proportional to

    n_h * prod_j psi[h, j, x_ij]

where ``n_h`` counts the other rows in ``h``, or a brand new component
with probability proportional to

    alpha * prod_j beta[j, x_ij] / sum_c beta[j, c].

The second product is the exact marginal likelihood of a single row
under a fresh Dirichlet draw.  A newly opened component receives its
category probabilities right away, drawn from the Dirichlet posterior
given its one member, so that later rows in the same sweep see it on
equal footing.  After the reassignment pass the components are sorted
by occupancy (largest first, ties kept in previous order), and every
psi is redrawn from its Dirichlet posterior given the current
membership.

Missing cells simply carry the code 0 and participate in the products
above like any other category; no special casing happens inside the
sampler.  The division by the missing mass is deferred to
:func:`collapse_state`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator, TextIO

import numpy as np

from catmix.core import (
    CategoricalSchema,
    CollapsedModel,
    Dataset,
    ModelState,
    Priors,
    as_generator,
    padded_dirichlet,
)

__all__ = [
    "GibbsConfig",
    "PosteriorSample",
    "assignment_weights",
    "collapse_state",
    "init_state",
    "iterate_states",
    "prune_and_relabel",
    "run_gibbs",
    "sample_assignment",
    "update_psi",
]


@dataclass(frozen=True)
class GibbsConfig:
    """Chain length and seeding settings.

    Attributes
    ----------
    burnin : int
        Sweeps discarded from the start of the chain.
    samples : int
        Number of retained posterior draws.
    thin : int
        Keep one state every ``thin`` sweeps after burn-in.
    seed : int, SeedSequence or Generator, optional
        Seed of the chain's random stream.
    alpha_override : float, optional
        When set, replaces the concentration of whatever priors the fit
        is called with.
    beta_override : float, optional
        When set, replaces the priors with flat pseudo-counts of this
        value.
    """

    burnin: int = 200
    samples: int = 100
    thin: int = 2
    seed: object = None
    alpha_override: float | None = None
    beta_override: float | None = None

    def __post_init__(self):
        if self.burnin < 0:
            raise ValueError(f"burnin must be >= 0, got {self.burnin}")
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if self.thin < 1:
            raise ValueError(f"thin must be >= 1, got {self.thin}")
        for name in ("alpha_override", "beta_override"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")

    @property
    def total_sweeps(self) -> int:
        return self.burnin + self.samples * self.thin

    def retained(self, sweep: int) -> bool:
        """Whether the state after 1-based ``sweep`` is kept as a draw."""
        return sweep > self.burnin and (sweep - self.burnin) % self.thin == 0

    def resolve_priors(self, schema: CategoricalSchema,
                       priors: Priors | None) -> Priors:
        """Apply the overrides to ``priors`` (default: flat priors)."""
        if priors is None:
            priors = Priors.flat(schema)
        if self.beta_override is not None:
            priors = Priors.flat(schema, alpha=priors.alpha,
                                 beta_value=self.beta_override)
        if self.alpha_override is not None:
            priors = Priors(alpha=self.alpha_override, beta=priors.beta)
        return priors


@dataclass(frozen=True)
class PosteriorSample:
    """Output of :func:`run_gibbs`.

    Attributes
    ----------
    draws : tuple of CollapsedModel
        Retained posterior draws, already rescaled to observable codes.
    k_values : ndarray of int
        Number of occupied components in each retained draw.
    config : GibbsConfig
    seed_token : object
        Opaque record of how the chain was seeded.
    final_state : ModelState
        Chain state after the last sweep.
    elapsed_seconds : float
    """

    draws: tuple[CollapsedModel, ...]
    k_values: np.ndarray
    config: GibbsConfig
    seed_token: object
    final_state: ModelState
    elapsed_seconds: float

    @property
    def k_histogram(self) -> dict[int, int]:
        """Map from component count to how many retained draws had it."""
        ks, freq = np.unique(self.k_values, return_counts=True)
        return {int(a): int(b) for a, b in zip(ks, freq)}

    @property
    def modal_k(self) -> int:
        """Most frequent component count; ties go to the smaller count."""
        hist = self.k_histogram
        return min(hist, key=lambda k: (-hist[k], k))


# ---------------------------------------------------------------------------
# Internal mutable chain
# ---------------------------------------------------------------------------
#
# The public operations below are thin wrappers around these kernels, and
# the sweep loop drives the same kernels on a mutable record.  Keeping a
# single implementation guarantees that composing the public steps by hand
# reproduces run_gibbs draw for draw.

class _Chain:
    __slots__ = (
        "x", "n", "p", "width", "cols",
        "alpha", "beta_pad", "new_loglik",
        "z", "counts", "psi", "log_psi",
    )

    def __init__(self, data: Dataset, priors: Priors):
        priors.matches(data.schema)
        self.x = np.ascontiguousarray(data.cells)
        self.n, self.p = self.x.shape
        self.width = data.schema.max_cardinality + 1
        self.cols = np.arange(self.p)
        self.alpha = priors.alpha
        self.beta_pad = priors.beta_padded(data.schema)
        # log marginal likelihood of each row under a fresh component:
        # sum_j log(beta[j, x_ij] / sum_c beta[j, c])
        with np.errstate(divide="ignore"):
            log_beta = np.log(self.beta_pad)
        log_beta = log_beta - np.log(self.beta_pad.sum(axis=1))[:, None]
        self.new_loglik = log_beta[self.cols[None, :], self.x].sum(axis=1)
        self.z = None
        self.counts = None
        self.psi = None
        self.log_psi = None

    # -- state transfer ----------------------------------------------------

    def set_psi(self, psi: np.ndarray) -> None:
        self.psi = psi
        with np.errstate(divide="ignore"):
            self.log_psi = np.log(psi)

    def load(self, state: ModelState) -> None:
        self.z = np.array(state.assignments)
        self.counts = np.array(state.counts)
        self.set_psi(np.array(state.psi))

    def snapshot(self, seed_token, schema: CategoricalSchema) -> ModelState:
        return ModelState(
            schema=schema,
            assignments=self.z.copy(),
            counts=self.counts.copy(),
            psi=self.psi.copy(),
            seed_token=seed_token,
        )

    # -- kernels -----------------------------------------------------------

    def init(self, rng: np.random.Generator) -> None:
        """Every row in its own component, psi drawn from the prior."""
        self.z = np.arange(self.n)
        self.counts = np.ones(self.n, dtype=np.int64)
        conc = np.broadcast_to(self.beta_pad, (self.n, self.p, self.width))
        self.set_psi(padded_dirichlet(conc, rng))

    def detach(self, i: int) -> None:
        """Remove row i from its component, dropping it if now empty."""
        h = self.z[i]
        self.counts[h] -= 1
        self.z[i] = -1
        if self.counts[h] == 0:
            self.counts = np.delete(self.counts, h)
            self.psi = np.delete(self.psi, h, axis=0)
            self.log_psi = np.delete(self.log_psi, h, axis=0)
            self.z[self.z > h] -= 1

    def row_weights(self, i: int) -> np.ndarray:
        """Normalized reassignment probabilities for detached row i.

        Entry ``h < k`` targets existing component ``h``; the last entry
        opens a new component.
        """
        loglik = self.log_psi[:, self.cols, self.x[i]].sum(axis=1)
        logw = np.empty(self.counts.size + 1)
        logw[:-1] = np.log(self.counts) + loglik
        logw[-1] = np.log(self.alpha) + self.new_loglik[i]
        logw -= logw.max()
        w = np.exp(logw)
        return w / w.sum()

    def commit(self, i: int, h: int, rng: np.random.Generator) -> None:
        """Attach detached row i to component h (== k opens a new one)."""
        k = self.counts.size
        if h < k:
            self.z[i] = h
            self.counts[h] += 1
            return
        conc = self.beta_pad.copy()
        conc[self.cols, self.x[i]] += 1.0
        fresh = padded_dirichlet(conc[None, :, :], rng)
        self.z[i] = k
        self.counts = np.append(self.counts, 1)
        self.psi = np.concatenate([self.psi, fresh])
        with np.errstate(divide="ignore"):
            self.log_psi = np.concatenate([self.log_psi, np.log(fresh)])

    def reassign(self, i: int, rng: np.random.Generator) -> None:
        self.detach(i)
        w = self.row_weights(i)
        self.commit(i, _pick(w, rng), rng)

    def prune_sort(self) -> None:
        """Drop empty components, sort the rest by descending occupancy.

        Ties keep their previous relative order.
        """
        k = self.counts.size
        order = np.lexsort((np.arange(k), -self.counts))
        order = order[self.counts[order] > 0]
        relabel = np.empty(k, dtype=np.int64)
        relabel[order] = np.arange(order.size)
        self.z = relabel[self.z]
        self.counts = self.counts[order]
        self.psi = self.psi[order]
        self.log_psi = self.log_psi[order]

    def redraw_psi(self, rng: np.random.Generator) -> None:
        """Draw every psi from its Dirichlet posterior given the members."""
        k = self.counts.size
        flat = (self.z[:, None] * (self.p * self.width)
                + self.cols[None, :] * self.width + self.x)
        tab = np.bincount(flat.ravel(), minlength=k * self.p * self.width)
        conc = tab.reshape(k, self.p, self.width) + self.beta_pad
        self.set_psi(padded_dirichlet(conc, rng))

    def sweep(self, rng: np.random.Generator) -> None:
        for i in range(self.n):
            self.reassign(i, rng)
        self.prune_sort()
        self.redraw_psi(rng)


def _pick(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Sample an index from a normalized weight vector."""
    edges = np.cumsum(weights)
    idx = int(np.searchsorted(edges, rng.random() * edges[-1], side="right"))
    return min(idx, weights.size - 1)


# ---------------------------------------------------------------------------
# Public single-step operations
# ---------------------------------------------------------------------------

def init_state(data: Dataset, priors: Priors, seed=None) -> ModelState:
    """Initial chain state: one component per row, psi from the prior.

    Parameters
    ----------
    data : Dataset
    priors : Priors
    seed : int, SeedSequence or Generator, optional

    Returns
    -------
    ModelState
    """
    if data.n_rows == 0:
        raise ValueError("cannot initialize a chain on an empty dataset")
    rng = as_generator(seed)
    ch = _Chain(data, priors)
    ch.init(rng)
    return ch.snapshot(_token(seed), data.schema)


def assignment_weights(row: int, state: ModelState, data: Dataset,
                       priors: Priors) -> np.ndarray:
    """Conditional reassignment distribution of one row.

    The row is detached from its current component first, so if it was
    alone in one, that component does not appear among the choices.

    Returns
    -------
    ndarray, shape (k' + 1,)
        Probabilities over the ``k'`` components remaining after the
        detachment, in order, followed by the probability of opening a
        new component.  Sums to 1.
    """
    _check_row(row, state)
    ch = _Chain(data, priors)
    ch.load(state)
    ch.detach(row)
    return ch.row_weights(row)


def sample_assignment(row: int, weights: np.ndarray, state: ModelState,
                      data: Dataset, priors: Priors, rng) -> ModelState:
    """Redraw the component of one row from its conditional.

    Parameters
    ----------
    row : int
    weights : ndarray
        The vector returned by :func:`assignment_weights` for this row
        and state.
    state : ModelState
    data : Dataset
    priors : Priors
    rng : int, SeedSequence or Generator

    Returns
    -------
    ModelState
        The updated state.  A new component, when opened, receives psi
        drawn from its single-member Dirichlet posterior.
    """
    _check_row(row, state)
    rng = as_generator(rng)
    ch = _Chain(data, priors)
    ch.load(state)
    ch.detach(row)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (ch.counts.size + 1,):
        raise ValueError(
            f"weights has shape {weights.shape}, expected "
            f"({ch.counts.size + 1},) after detaching row {row}"
        )
    ch.commit(row, _pick(weights, rng), rng)
    return ch.snapshot(state.seed_token, data.schema)


def prune_and_relabel(state: ModelState) -> ModelState:
    """Delete empty components and sort by descending occupancy.

    Ties keep their previous relative order, so the relabelling is
    deterministic.
    """
    k = state.k
    counts = np.asarray(state.counts)
    order = np.lexsort((np.arange(k), -counts))
    order = order[counts[order] > 0]
    relabel = np.empty(k, dtype=np.int64)
    relabel[order] = np.arange(order.size)
    return ModelState(
        schema=state.schema,
        assignments=relabel[state.assignments],
        counts=counts[order],
        psi=np.asarray(state.psi)[order],
        seed_token=state.seed_token,
    )


def update_psi(state: ModelState, data: Dataset, priors: Priors,
               rng) -> ModelState:
    """Redraw every component's psi from its Dirichlet posterior."""
    rng = as_generator(rng)
    ch = _Chain(data, priors)
    ch.load(state)
    ch.redraw_psi(rng)
    return ch.snapshot(state.seed_token, data.schema)


def collapse_state(state: ModelState, data: Dataset | None = None) -> CollapsedModel:
    """Rescale a chain state into a mixture over observable codes.

    Component weights are the occupancy fractions ``n_h / n``.  Within
    each component the missing mass is divided out:
    ``tilde_psi[h, j, c - 1] = psi[h, j, c] / (1 - psi[h, j, 0])``.

    Parameters
    ----------
    state : ModelState
    data : Dataset, optional
        Only used for a consistency check; the occupancy counts carried
        by the state already determine the weights.

    Raises
    ------
    ValueError
        If some component puts essentially all of its mass for a
        variable on the missing code, leaving nothing to rescale.  This
        cannot happen with positive priors but is guarded anyway.
    """
    if data is not None and data.n_rows != state.n_rows:
        raise ValueError(
            f"state covers {state.n_rows} rows but the dataset has "
            f"{data.n_rows}"
        )
    psi = np.asarray(state.psi)
    missing_mass = psi[:, :, 0]
    if (missing_mass >= 1.0 - 1e-12).any():
        raise ValueError(
            "a component assigns probability 1 to the missing code; "
            "the observable distribution is undefined"
        )
    theta = state.counts / state.counts.sum()
    tilde = psi[:, :, 1:] / (1.0 - missing_mass[:, :, None])
    return CollapsedModel(state.schema, theta, tilde)


def iterate_states(data: Dataset, priors: Priors | None = None,
                   sweeps: int = 1, seed=None,
                   progress: TextIO | None = None,
                   progress_every: int = 50) -> Iterator[ModelState]:
    """Run the chain, yielding the state after each sweep.

    This is the raw loop underneath :func:`run_gibbs`; it is useful
    when per-sweep quantities such as the partition itself are wanted.

    Parameters
    ----------
    data : Dataset
    priors : Priors, optional
        Defaults to ``Priors.flat(data.schema)``.
    sweeps : int
        Number of sweeps to run.
    seed : int, SeedSequence or Generator, optional
    progress : text stream, optional
        When given, a line ``sweep <t>/<T> k=<k>`` is written every
        ``progress_every`` sweeps and after the final one.

    Yields
    ------
    ModelState
        An independent snapshot after each sweep.
    """
    if data.n_rows == 0:
        raise ValueError("cannot run the sampler on an empty dataset")
    if sweeps < 1:
        raise ValueError(f"sweeps must be >= 1, got {sweeps}")
    if priors is None:
        priors = Priors.flat(data.schema)
    rng = as_generator(seed)
    token = _token(seed)
    ch = _Chain(data, priors)
    ch.init(rng)
    for t in range(1, sweeps + 1):
        ch.sweep(rng)
        if progress is not None and (
            t % progress_every == 0 or t == sweeps
        ):
            print(f"sweep {t}/{sweeps} k={ch.counts.size}", file=progress)
        yield ch.snapshot(token, data.schema)


def run_gibbs(data: Dataset, priors: Priors | None = None,
              config: GibbsConfig | None = None, seed=None,
              progress: TextIO | None = None,
              progress_every: int = 50) -> PosteriorSample:
    """Fit the mixture by collapsed Gibbs sampling.

    Runs ``burnin + samples * thin`` sweeps and keeps every ``thin``-th
    state after burn-in, already rescaled to observable codes.

    Parameters
    ----------
    data : Dataset
    priors : Priors, optional
        Defaults to ``Priors.flat(data.schema)``; the config's
        ``alpha_override``/``beta_override`` are applied on top.
    config : GibbsConfig, optional
    seed : int, SeedSequence or Generator, optional
        Takes precedence over ``config.seed`` when both are given.
    progress : text stream, optional
        Passed through to :func:`iterate_states`.

    Returns
    -------
    PosteriorSample
    """
    if config is None:
        config = GibbsConfig()
    if seed is None:
        seed = config.seed
    priors = config.resolve_priors(data.schema, priors)
    started = time.perf_counter()
    draws: list[CollapsedModel] = []
    k_values: list[int] = []
    state = None
    states = iterate_states(
        data, priors, sweeps=config.total_sweeps, seed=seed,
        progress=progress, progress_every=progress_every,
    )
    for t, state in enumerate(states, start=1):
        if config.retained(t):
            draws.append(collapse_state(state))
            k_values.append(state.k)
    return PosteriorSample(
        draws=tuple(draws),
        k_values=np.asarray(k_values, dtype=np.int64),
        config=config,
        seed_token=_token(seed),
        final_state=state,
        elapsed_seconds=time.perf_counter() - started,
    )


def _token(seed) -> object:
    if seed is None or isinstance(seed, (int, np.integer)):
        return seed
    return repr(seed)


def _check_row(row: int, state: ModelState) -> None:
    if not 0 <= row < state.n_rows:
        raise ValueError(f"row {row} out of range for {state.n_rows} rows")
