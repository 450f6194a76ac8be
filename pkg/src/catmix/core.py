"""
Core data structures and serialization.

Conventions used throughout the package:

* A table of ``n`` rows and ``p`` categorical variables is stored as an
  ``(n, p)`` integer array.  Variable ``j`` takes codes ``1 .. d_j``;
  the code ``0`` is reserved for missing entries.
* Probability vectors over the codes of variable ``j`` come in two
  flavours.  Vectors that include the missing code have length
  ``d_j + 1`` and are indexed by ``0 .. d_j``.  Vectors over observable
  codes only have length ``d_j`` and are indexed by ``code - 1``.
* Arrays that stack per-variable vectors are padded with zeros up to
  the largest cardinality so that everything fits in one rectangular
  ndarray.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CategoricalSchema",
    "CollapsedModel",
    "Dataset",
    "JointDistribution",
    "LoadError",
    "MissingnessTable",
    "ModelState",
    "ParseError",
    "Priors",
    "DEFAULT_CELL_LIMIT",
    "MISSING",
    "NA_TOKEN",
    "as_generator",
    "padded_dirichlet",
    "dataset_to_csv",
    "deserialize_model",
    "deserialize_models",
    "model_from_dict",
    "model_to_dict",
    "parse_dataset",
    "serialize_model",
    "serialize_models",
]

#: Integer code reserved for missing cells.
MISSING = 0

#: Token used for missing cells in CSV files.
NA_TOKEN = "NA"

#: Largest number of cells a dense joint distribution may have.
DEFAULT_CELL_LIMIT = 10_000_000

#: Tolerance applied to probability vectors read from external files.
LOAD_TOL = 1e-8


class ParseError(ValueError):
    """Raised when a CSV document cannot be parsed into a dataset."""


class LoadError(ValueError):
    """Raised when a model document is malformed or inconsistent."""


def as_generator(seed) -> np.random.Generator:
    """Coerce ``seed`` (int, SeedSequence, Generator or None) to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def padded_dirichlet(conc: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Batched Dirichlet draws along the last axis of ``conc``.

    Zero concentrations yield exact zeros, so zero padded concentration
    arrays produce correspondingly padded probability arrays.
    """
    g = rng.standard_gamma(conc)
    return g / g.sum(axis=-1, keepdims=True)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CategoricalSchema:
    """Cardinalities of a block of categorical variables.

    Parameters
    ----------
    cardinalities : sequence of int
        ``cardinalities[j]`` is the number of observable categories of
        variable ``j``.  Every entry must be at least 2; a "variable"
        with a single category carries no information.
    """

    cardinalities: tuple[int, ...]

    def __init__(self, cardinalities: Iterable[int]):
        cards = tuple(int(d) for d in cardinalities)
        if len(cards) == 0:
            raise ValueError("schema needs at least one variable")
        for j, d in enumerate(cards):
            if d < 2:
                raise ValueError(
                    f"variable {j} has cardinality {d}, expected at least 2"
                )
        object.__setattr__(self, "cardinalities", cards)

    @property
    def n_variables(self) -> int:
        return len(self.cardinalities)

    @property
    def max_cardinality(self) -> int:
        return max(self.cardinalities)

    def n_cells(self) -> int:
        """Number of cells in the full contingency table."""
        return math.prod(self.cardinalities)

    def codes_array(self) -> np.ndarray:
        """Cardinalities as an int array, handy for vectorized checks."""
        return np.asarray(self.cardinalities, dtype=np.int64)


@dataclass(frozen=True)
class Dataset:
    """An ``(n, p)`` table of categorical codes with 0 marking missing.

    Parameters
    ----------
    schema : CategoricalSchema
    cells : array-like of int, shape (n, p)
        Codes in ``0 .. d_j`` per column, 0 meaning missing.
    column_names : sequence of str, optional
        Defaults to ``V1 .. Vp``.
    """

    schema: CategoricalSchema
    cells: np.ndarray
    column_names: tuple[str, ...] = ()

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64)
        if cells.ndim != 2:
            raise ValueError(f"cells must be 2-dimensional, got shape {cells.shape}")
        p = self.schema.n_variables
        if cells.shape[1] != p:
            raise ValueError(
                f"cells has {cells.shape[1]} columns but schema has {p} variables"
            )
        cards = self.schema.codes_array()
        if cells.size and (cells.min() < 0 or (cells > cards[None, :]).any()):
            raise ValueError("cell codes must lie in 0 .. d_j for each column")
        names = tuple(self.column_names) or tuple(
            f"V{j + 1}" for j in range(p)
        )
        if len(names) != p:
            raise ValueError(
                f"{len(names)} column names supplied for {p} variables"
            )
        object.__setattr__(self, "cells", _readonly(cells))
        object.__setattr__(self, "column_names", names)

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def n_variables(self) -> int:
        return self.cells.shape[1]

    @property
    def observed_mask(self) -> np.ndarray:
        """Boolean mask of observed (non missing) cells."""
        return self.cells != MISSING

    def n_missing(self) -> int:
        return int((self.cells == MISSING).sum())

    def replace_cells(self, cells: np.ndarray) -> "Dataset":
        """Same schema and names, new cell values."""
        return Dataset(self.schema, cells, self.column_names)


@dataclass(frozen=True)
class Priors:
    """Hyperparameters of the mixture.

    Parameters
    ----------
    alpha : float
        Concentration of the partition prior.  Small values favour few
        occupied components.
    beta : tuple of ndarray
        ``beta[j]`` has length ``d_j + 1`` and holds the Dirichlet
        pseudo-counts for variable ``j`` over the codes ``0 .. d_j``
        (the missing code included).  All entries must be positive.
    """

    alpha: float
    beta: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be a positive finite number, got {self.alpha}")
        beta = tuple(_readonly(np.asarray(b, dtype=np.float64)) for b in self.beta)
        for j, b in enumerate(beta):
            if b.ndim != 1 or b.size < 3:
                raise ValueError(
                    f"beta[{j}] must be a 1-d vector of length d_j + 1 >= 3"
                )
            if not (np.isfinite(b).all() and (b > 0).all()):
                raise ValueError(f"beta[{j}] entries must be positive and finite")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def flat(cls, schema: CategoricalSchema, alpha: float = 0.25,
             beta_value: float = 1.0) -> "Priors":
        """Symmetric priors: every pseudo-count equal to ``beta_value``."""
        beta = tuple(
            np.full(d + 1, float(beta_value)) for d in schema.cardinalities
        )
        return cls(alpha=float(alpha), beta=beta)

    def matches(self, schema: CategoricalSchema) -> None:
        """Raise ValueError if the beta vectors do not fit ``schema``."""
        if len(self.beta) != schema.n_variables:
            raise ValueError(
                f"priors cover {len(self.beta)} variables, "
                f"schema has {schema.n_variables}"
            )
        for j, (b, d) in enumerate(zip(self.beta, schema.cardinalities)):
            if b.size != d + 1:
                raise ValueError(
                    f"beta[{j}] has length {b.size}, expected {d + 1}"
                )

    def beta_padded(self, schema: CategoricalSchema) -> np.ndarray:
        """Stack the beta vectors into a zero padded ``(p, D + 1)`` array."""
        self.matches(schema)
        p = schema.n_variables
        width = schema.max_cardinality + 1
        out = np.zeros((p, width))
        for j, b in enumerate(self.beta):
            out[j, : b.size] = b
        return out


@dataclass(frozen=True)
class ModelState:
    """Full state of the Gibbs chain after a sweep.

    Attributes
    ----------
    schema : CategoricalSchema
    assignments : ndarray of int, shape (n,)
        Component index of each row, in ``0 .. k - 1``.
    counts : ndarray of int, shape (k,)
        Occupancy of each component; all entries positive.
    psi : ndarray, shape (k, p, D + 1)
        Per component category probabilities over the codes
        ``0 .. d_j`` (missing included), zero padded beyond ``d_j``.
    seed_token : object
        Opaque token recording how the chain was seeded, carried along
        for reproducibility bookkeeping.  Not interpreted.
    """

    schema: CategoricalSchema
    assignments: np.ndarray
    counts: np.ndarray
    psi: np.ndarray
    seed_token: object = None

    def __post_init__(self):
        object.__setattr__(
            self, "assignments", _readonly(np.asarray(self.assignments, np.int64))
        )
        object.__setattr__(
            self, "counts", _readonly(np.asarray(self.counts, np.int64))
        )
        object.__setattr__(
            self, "psi", _readonly(np.asarray(self.psi, np.float64))
        )

    @property
    def k(self) -> int:
        """Number of occupied components."""
        return self.counts.shape[0]

    @property
    def n_rows(self) -> int:
        return self.assignments.shape[0]

    def validate(self) -> None:
        """Check the structural invariants, raising ValueError on failure."""
        k = self.k
        p = self.schema.n_variables
        width = self.schema.max_cardinality + 1
        if self.psi.shape != (k, p, width):
            raise ValueError(
                f"psi has shape {self.psi.shape}, expected {(k, p, width)}"
            )
        if (self.counts <= 0).any():
            raise ValueError("every retained component must be occupied")
        if self.counts.sum() != self.n_rows:
            raise ValueError("component counts do not add up to the row count")
        if self.assignments.min() < 0 or self.assignments.max() >= k:
            raise ValueError("assignments reference missing components")
        obs = np.bincount(self.assignments, minlength=k)
        if not np.array_equal(obs, self.counts):
            raise ValueError("counts disagree with assignments")
        if (self.psi < 0).any():
            raise ValueError("psi entries must be nonnegative")
        for j, d in enumerate(self.schema.cardinalities):
            sums = self.psi[:, j, : d + 1].sum(axis=1)
            if not np.allclose(sums, 1.0, rtol=0, atol=1e-10):
                raise ValueError(f"psi rows of variable {j} do not sum to 1")
            if self.psi[:, j, d + 1 :].any():
                raise ValueError(f"psi padding of variable {j} is not zero")


@dataclass(frozen=True)
class CollapsedModel:
    """A finite mixture over observable codes, the end product of a fit.

    Attributes
    ----------
    schema : CategoricalSchema
    theta : ndarray, shape (k,)
        Mixture weights, summing to 1.
    tilde_psi : ndarray, shape (k, p, D)
        Per component probabilities over the observable codes
        ``1 .. d_j`` of each variable, stored at index ``code - 1`` and
        zero padded beyond ``d_j``.  The missing code has been divided
        out, so each row sums to 1.
    """

    schema: CategoricalSchema
    theta: np.ndarray
    tilde_psi: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        tilde = np.asarray(self.tilde_psi, dtype=np.float64)
        p = self.schema.n_variables
        width = self.schema.max_cardinality
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError("theta must be a nonempty vector")
        k = theta.size
        if tilde.shape != (k, p, width):
            raise ValueError(
                f"tilde_psi has shape {tilde.shape}, expected {(k, p, width)}"
            )
        if (theta < 0).any() or abs(theta.sum() - 1.0) > LOAD_TOL:
            raise ValueError("theta must be nonnegative and sum to 1")
        if (tilde < 0).any():
            raise ValueError("tilde_psi entries must be nonnegative")
        for j, d in enumerate(self.schema.cardinalities):
            sums = tilde[:, j, :d].sum(axis=1)
            if np.abs(sums - 1.0).max() > LOAD_TOL:
                raise ValueError(
                    f"tilde_psi rows of variable {j} do not sum to 1"
                )
            if tilde[:, j, d:].any():
                raise ValueError(f"tilde_psi padding of variable {j} is not zero")
        object.__setattr__(self, "theta", _readonly(theta))
        object.__setattr__(self, "tilde_psi", _readonly(tilde))

    @property
    def k(self) -> int:
        return self.theta.shape[0]

    @property
    def n_variables(self) -> int:
        return self.schema.n_variables


@dataclass(frozen=True)
class JointDistribution:
    """Dense joint probability table over all variables.

    The table axis ``j`` has length ``d_j`` and index ``c`` corresponds
    to code ``c + 1``.  Construction refuses tables larger than
    ``cell_limit`` cells; dense joints over many variables explode
    combinatorially and callers should fall back to
    :func:`catmix.inference.pair_marginal` style queries instead.
    """

    schema: CategoricalSchema
    table: np.ndarray
    cell_limit: int = DEFAULT_CELL_LIMIT

    def __post_init__(self):
        n_cells = self.schema.n_cells()
        if n_cells > self.cell_limit:
            raise ValueError(
                f"joint table would hold {n_cells} cells, "
                f"limit is {self.cell_limit}"
            )
        table = np.asarray(self.table, dtype=np.float64)
        if table.shape != tuple(self.schema.cardinalities):
            raise ValueError(
                f"table has shape {table.shape}, expected "
                f"{tuple(self.schema.cardinalities)}"
            )
        if (table < 0).any():
            raise ValueError("joint probabilities must be nonnegative")
        if abs(table.sum() - 1.0) > 1e-9:
            raise ValueError(f"joint table sums to {table.sum()!r}, expected 1")
        object.__setattr__(self, "table", _readonly(table))


@dataclass(frozen=True)
class MissingnessTable:
    """Cell-wise missingness probabilities.

    ``q[j]`` is an array of shape ``(d_1, ..., d_p)``;
    ``q[j][c1 - 1, ..., cp - 1]`` is the probability that variable ``j``
    goes missing in a row whose complete values are ``(c1, ..., cp)``.
    """

    schema: CategoricalSchema
    q: np.ndarray

    def __post_init__(self):
        dims = tuple(self.schema.cardinalities)
        q = np.asarray(self.q, dtype=np.float64)
        if q.shape != (self.schema.n_variables,) + dims:
            raise ValueError(
                f"q has shape {q.shape}, expected "
                f"{(self.schema.n_variables,) + dims}"
            )
        if (q < 0).any() or (q > 1).any():
            raise ValueError("missingness probabilities must lie in [0, 1]")
        object.__setattr__(self, "q", _readonly(q))


# ---------------------------------------------------------------------------
# CSV datasets
# ---------------------------------------------------------------------------

def parse_dataset(text: str, schema: CategoricalSchema | None = None) -> Dataset:
    """Parse a CSV document into a :class:`Dataset`.

    The first line is a header of column names.  Each following line
    holds one integer code per column; missing cells are written as
    ``NA`` (an empty field is accepted as well).  Codes must be
    positive: 0 is reserved for missing and may not appear literally.

    Parameters
    ----------
    text : str
        The CSV document.
    schema : CategoricalSchema, optional
        When given, codes are validated against it.  When omitted, the
        cardinality of each column is inferred as the largest code seen
        in that column.

    Returns
    -------
    Dataset

    Raises
    ------
    ParseError
        On structural problems, non integer fields, out of range codes,
        or columns whose cardinality cannot be inferred.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() != ""]
    if not lines:
        raise ParseError("document is empty")
    names = [f.strip() for f in lines[0].split(",")]
    p = len(names)
    if schema is not None and schema.n_variables != p:
        raise ParseError(
            f"header has {p} columns but schema has "
            f"{schema.n_variables} variables"
        )

    rows = np.zeros((len(lines) - 1, p), dtype=np.int64)
    for i, ln in enumerate(lines[1:], start=2):
        fields = [f.strip() for f in ln.split(",")]
        if len(fields) != p:
            raise ParseError(
                f"line {i}: expected {p} fields, found {len(fields)}"
            )
        for j, f in enumerate(fields):
            if f == "" or f.upper() == NA_TOKEN:
                continue
            try:
                code = int(f)
            except ValueError:
                raise ParseError(
                    f"line {i}, column {names[j]!r}: {f!r} is not an integer"
                ) from None
            if code <= 0:
                raise ParseError(
                    f"line {i}, column {names[j]!r}: codes must be positive, "
                    f"use {NA_TOKEN} for missing entries"
                )
            rows[i - 2, j] = code

    if schema is None:
        cards = rows.max(axis=0, initial=0)
        bad = [names[j] for j in np.nonzero(cards < 2)[0]]
        if bad:
            raise ParseError(
                "cannot infer cardinalities for column(s) "
                f"{', '.join(bad)}; supply a schema"
            )
        schema = CategoricalSchema(cards.tolist())
    else:
        limit = schema.codes_array()
        over = rows > limit[None, :]
        if rows.size and over.any():
            i, j = np.argwhere(over)[0]
            raise ParseError(
                f"line {i + 2}, column {names[j]!r}: code {rows[i, j]} "
                f"exceeds cardinality {limit[j]}"
            )
    return Dataset(schema, rows, tuple(names))


def dataset_to_csv(dataset: Dataset) -> str:
    """Render a dataset in the CSV format understood by :func:`parse_dataset`."""
    out = [",".join(dataset.column_names)]
    for row in dataset.cells:
        out.append(
            ",".join(NA_TOKEN if c == MISSING else str(int(c)) for c in row)
        )
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Model JSON documents
# ---------------------------------------------------------------------------

def model_to_dict(model: CollapsedModel) -> dict:
    """Plain-JSON representation of a collapsed model.

    ``tildePsi`` is stored ragged: ``tildePsi[h][j]`` has exactly
    ``d_j`` entries, so the document never exposes the internal zero
    padding.
    """
    cards = model.schema.cardinalities
    tilde = [
        [model.tilde_psi[h, j, :d].tolist() for j, d in enumerate(cards)]
        for h in range(model.k)
    ]
    return {
        "k": model.k,
        "cardinalities": list(cards),
        "theta": model.theta.tolist(),
        "tildePsi": tilde,
    }


def model_from_dict(obj) -> CollapsedModel:
    """Inverse of :func:`model_to_dict`, validating as it goes.

    Raises
    ------
    LoadError
        If required keys are missing, shapes are inconsistent, entries
        are negative, or a probability vector deviates from sum 1 by
        more than 1e-8.
    """
    if not isinstance(obj, dict):
        raise LoadError(f"model document must be an object, got {type(obj).__name__}")
    for key in ("k", "cardinalities", "theta", "tildePsi"):
        if key not in obj:
            raise LoadError(f"model document lacks required key {key!r}")
    try:
        schema = CategoricalSchema(obj["cardinalities"])
    except (TypeError, ValueError) as exc:
        raise LoadError(f"bad cardinalities: {exc}") from None

    k = obj["k"]
    theta = obj["theta"]
    tilde = obj["tildePsi"]
    if not isinstance(k, int) or k < 1:
        raise LoadError(f"k must be a positive integer, got {k!r}")
    if not isinstance(theta, list) or len(theta) != k:
        raise LoadError(f"theta must be a list of length k={k}")
    if not isinstance(tilde, list) or len(tilde) != k:
        raise LoadError(f"tildePsi must be a list of length k={k}")

    p = schema.n_variables
    width = schema.max_cardinality
    packed = np.zeros((k, p, width))
    for h, comp in enumerate(tilde):
        if not isinstance(comp, list) or len(comp) != p:
            raise LoadError(f"tildePsi[{h}] must list {p} variables")
        for j, (vec, d) in enumerate(zip(comp, schema.cardinalities)):
            if not isinstance(vec, list) or len(vec) != d:
                raise LoadError(
                    f"tildePsi[{h}][{j}] must have {d} entries"
                )
            packed[h, j, :d] = vec
    try:
        return CollapsedModel(schema, np.asarray(theta, dtype=np.float64), packed)
    except (TypeError, ValueError) as exc:
        raise LoadError(str(exc)) from None


def serialize_model(model: CollapsedModel) -> str:
    """Serialize one model as a JSON document (bit exact round trip)."""
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def deserialize_model(text: str) -> CollapsedModel:
    """Parse a document produced by :func:`serialize_model`."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LoadError(f"invalid JSON: {exc}") from None
    return model_from_dict(obj)


def serialize_models(models: Sequence[CollapsedModel]) -> str:
    """Serialize a list of posterior draws as one JSON document."""
    models = list(models)
    if not models:
        raise ValueError("need at least one model")
    schema = models[0].schema
    for m in models[1:]:
        if m.schema.cardinalities != schema.cardinalities:
            raise ValueError("all draws must share one schema")
    return json.dumps(
        {
            "cardinalities": list(schema.cardinalities),
            "draws": [model_to_dict(m) for m in models],
        },
        indent=2,
    ) + "\n"


def deserialize_models(text: str) -> list[CollapsedModel]:
    """Parse a document produced by :func:`serialize_models`.

    Single-model documents are accepted too and yield a one element
    list, so consumers can treat the two formats interchangeably.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LoadError(f"invalid JSON: {exc}") from None
    if isinstance(obj, dict) and "draws" in obj:
        draws = obj["draws"]
        if not isinstance(draws, list) or not draws:
            raise LoadError("'draws' must be a nonempty list")
        models = [model_from_dict(d) for d in draws]
        cards = models[0].schema.cardinalities
        if any(m.schema.cardinalities != cards for m in models):
            raise LoadError("draws disagree on cardinalities")
        return models
    return [model_from_dict(obj)]
