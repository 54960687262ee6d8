"""Transaction records to activity tensors, plus a synthetic stand-in dataset.

The CSV layout follows the public bank product-ownership export: one row per
(client, month) with one column per product label holding a flag or count.
Column names, the label list and the month epoch come from a JSON schema::

    {
      "client_column": "ncodpers",
      "date_column": "fecha_dato",
      "labels": ["ind_ahor_fin_ult1", "ind_cco_fin_ult1"],
      "epoch": "2015-01",
      "n_slices": 16,
      "date_format": "%Y-%m-%d",
      "max_malformed_fraction": 0.01
    }
"""

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from cpoptnet.tensor import KruskalTensor, SparseTensor3

log = logging.getLogger(__name__)

_MISSING = {"", "na", "nan", "null", "none"}


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class TransactionRecord:
    client_id: str
    label: str
    month_index: int
    value: float


@dataclass(frozen=True)
class IngestSchema:
    client_column: str
    date_column: str
    labels: tuple
    epoch: str = "2015-01"
    n_slices: int = 16
    date_format: str = "%Y-%m-%d"
    max_malformed_fraction: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise ValueError("schema needs at least one label column")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate label columns in schema")
        if self.n_slices < 1:
            raise ValueError("n_slices must be positive")
        _parse_epoch(self.epoch)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class LoadReport:
    rows: int = 0
    malformed: int = 0
    out_of_span: int = 0
    malformed_lines: list = field(default_factory=list)


def _parse_epoch(epoch):
    try:
        d = datetime.strptime(epoch, "%Y-%m")
    except ValueError as exc:
        raise ValueError(f"epoch must look like YYYY-MM, got {epoch!r}") from exc
    return d.year, d.month


def month_index(date, epoch):
    year, month = epoch
    return (date.year - year) * 12 + (date.month - month)


def load_records(path, schema, with_report=False):
    """Read a wide CSV into one record per (row, active label).

    A label is active when its cell parses to a positive number; empty or
    NA cells count as inactive. Rows with a missing client id, an
    unparseable date, or a negative/non-numeric label cell are skipped and
    counted as malformed. Rows dated outside ``[epoch, epoch + n_slices)``
    are skipped silently.

    Raises
    ------
    OSError
        The file cannot be read.
    IngestError
        A schema column is missing from the header, or malformed rows
        exceed ``schema.max_malformed_fraction``.
    """
    epoch = _parse_epoch(schema.epoch)
    report = LoadReport()
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [schema.client_column, schema.date_column, *schema.labels]
        missing = [c for c in needed if c not in header]
        if missing:
            raise IngestError(f"{path}: columns not in header: {missing}")
        for line_no, row in enumerate(reader, start=2):
            report.rows += 1
            parsed = _parse_row(row, schema, epoch)
            if parsed is None:
                report.malformed += 1
                report.malformed_lines.append(line_no)
                continue
            client, k, active = parsed
            if not 0 <= k < schema.n_slices:
                report.out_of_span += 1
                continue
            records.extend(TransactionRecord(client, label, k, v) for label, v in active)

    if report.malformed:
        log.warning("%s: skipped %d malformed of %d rows", path, report.malformed, report.rows)
    if report.rows and report.malformed / report.rows > schema.max_malformed_fraction:
        raise IngestError(
            f"{path}: {report.malformed} of {report.rows} rows malformed, "
            f"above the {schema.max_malformed_fraction:.2%} limit"
        )
    return (records, report) if with_report else records


def _parse_row(row, schema, epoch):
    client = (row.get(schema.client_column) or "").strip()
    if not client:
        return None
    try:
        date = datetime.strptime((row.get(schema.date_column) or "").strip(), schema.date_format)
    except ValueError:
        return None
    active = []
    for label in schema.labels:
        cell = (row.get(label) or "").strip()
        if cell.lower() in _MISSING:
            continue
        try:
            v = float(cell)
        except ValueError:
            return None
        if not math.isfinite(v) or v < 0:
            return None
        if v > 0:
            active.append((label, v))
    return client, month_index(date, epoch), active


def select_top_clients(records, n):
    """Index map for the ``n`` clients with the most records.

    Ties are broken by the lexicographically smaller client id. Indices are
    assigned in rank order, most active first.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    counts = Counter(r.client_id for r in records)
    if len(counts) < n:
        raise ValueError(f"only {len(counts)} distinct clients, {n} requested")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n]
    return {cid: i for i, (cid, _) in enumerate(ranked)}


@dataclass(frozen=True)
class TensorSpec:
    """Tensor dimensions and the index maps behind them."""

    n_clients: int = 200
    n_labels: int = 22
    n_slices: int = 16
    client_index: dict = field(default_factory=dict)
    labels: tuple = ()
    epoch: str = "2015-01"

    def __post_init__(self):
        if min(self.n_clients, self.n_labels, self.n_slices) < 1:
            raise ValueError("tensor dimensions must be positive")
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.client_index:
            if sorted(self.client_index.values()) != list(range(self.n_clients)):
                raise ValueError("client index must map onto 0..n_clients-1")
        if self.labels and len(set(self.labels)) != self.n_labels:
            raise ValueError("label vocabulary must have n_labels distinct entries")

    @property
    def shape(self):
        return (self.n_clients, self.n_labels, self.n_slices)

    @classmethod
    def from_schema(cls, schema, client_index):
        return cls(
            n_clients=len(client_index),
            n_labels=len(schema.labels),
            n_slices=schema.n_slices,
            client_index=dict(client_index),
            labels=schema.labels,
            epoch=schema.epoch,
        )


def restrict_records(records, client_index):
    return [r for r in records if r.client_id in client_index]


def build_tensor(records, spec):
    """Sum record values into a sparse ``clients x labels x months`` tensor.

    Raises ``ValueError`` for a record whose client, label or month falls
    outside ``spec``.
    """
    label_index = {lab: j for j, lab in enumerate(spec.labels)}
    cells = {}
    for r in records:
        i = spec.client_index.get(r.client_id)
        j = label_index.get(r.label)
        if i is None or j is None or not 0 <= r.month_index < spec.n_slices:
            raise ValueError(f"record outside tensor spec: {r}")
        key = (i, j, r.month_index)
        cells[key] = cells.get(key, 0.0) + float(r.value)
    entries = [(i, j, k, v) for (i, j, k), v in sorted(cells.items()) if v != 0]
    return SparseTensor3.from_entries(spec.shape, entries)


def synth_factors(shape, true_rank, rng, period=4, trend_every=3):
    """Nonnegative factors; the time factor mixes seasonal and trend columns.

    Every ``trend_every``-th time column is a linear trend; ``0`` makes all
    of them sinusoidal.
    """
    I, J, K = shape
    A = rng.uniform(0.0, 1.0, size=(I, true_rank))
    B = rng.uniform(0.0, 1.0, size=(J, true_rank))
    months = np.arange(K)
    C = np.empty((K, true_rank))
    for r in range(true_rank):
        amp = rng.uniform(0.5, 1.5)
        if trend_every and r % trend_every == trend_every - 1:
            slope = rng.uniform(-0.5, 0.5)
            C[:, r] = amp * (1.0 + slope * months / max(K - 1, 1))
        else:
            phase = rng.uniform(0.0, 2.0 * np.pi)
            C[:, r] = amp * (1.0 + 0.8 * np.sin(2.0 * np.pi * months / period + phase))
    return KruskalTensor((A, B, C))


def synth_generate(spec, true_rank, noise_sigma, sparsity, seed, period=4, trend_every=3):
    """Synthetic low-rank activity tensor standing in for real records.

    Parameters
    ----------
    spec : TensorSpec or tuple
        Target shape.
    true_rank : int
        Rank of the noiseless model.
    noise_sigma : float
        Standard deviation of additive Gaussian noise on every cell.
    sparsity : float
        Probability, in ``[0, 1)``, that a cell is zeroed out.
    seed : int
    period : int
        Period, in slices, of the seasonal time-factor columns.
    trend_every : int
        Spacing of linear-trend columns in the time factor; 0 for none.

    Returns
    -------
    observed : SparseTensor3
    truth : KruskalTensor
    """
    shape = spec.shape if isinstance(spec, TensorSpec) else tuple(spec)
    if true_rank < 1:
        raise ValueError("true_rank must be at least 1")
    if not noise_sigma >= 0:
        raise ValueError("noise_sigma must be nonnegative")
    if not 0 <= sparsity < 1:
        raise ValueError("sparsity must lie in [0, 1)")
    if period < 1 or trend_every < 0:
        raise ValueError("period must be positive and trend_every nonnegative")
    rng = np.random.default_rng(seed)
    truth = synth_factors(shape, true_rank, rng, period, trend_every)
    dense = truth.to_dense()
    dense = dense + noise_sigma * rng.standard_normal(dense.shape)
    keep = rng.random(dense.shape) >= sparsity
    dense[~keep] = 0.0
    return SparseTensor3.from_dense(dense), truth
