import json
import math
from collections import Counter

import numpy as np
import pytest

from cpoptnet.cpopt import NcgConfig, relative_residual, solve
from cpoptnet.ingest import (
    IngestError,
    IngestSchema,
    TensorSpec,
    TransactionRecord,
    build_tensor,
    load_records,
    restrict_records,
    select_top_clients,
    synth_generate,
)
from cpoptnet.tensor import kruskal_to_dense

SCHEMA = IngestSchema("client", "date", ("save", "loan"), epoch="2015-01", n_slices=4)
HEADER = "client,date,save,loan\n"


def write_csv(tmp_path, body, name="tx.csv"):
    path = tmp_path / name
    path.write_text(HEADER + body)
    return path


class TestLoadRecords:
    def test_header_only(self, tmp_path):
        assert load_records(write_csv(tmp_path, ""), SCHEMA) == []

    def test_hand_fixture(self, tmp_path):
        body = "c1,2015-01-28,1,0\nc2,2015-03-28,1,2\nc1,2015-02-28,0,\n"
        records = load_records(write_csv(tmp_path, body), SCHEMA)
        assert records == [
            TransactionRecord("c1", "save", 0, 1.0),
            TransactionRecord("c2", "save", 2, 1.0),
            TransactionRecord("c2", "loan", 2, 2.0),
        ]

    def test_bad_date_is_skipped(self, tmp_path):
        rows = "".join(f"c{n},2015-01-28,1,0\n" for n in range(200))
        schema = IngestSchema("client", "date", ("save", "loan"), n_slices=4)
        records, report = load_records(
            write_csv(tmp_path, rows + "cx,not-a-date,1,1\n"), schema, with_report=True
        )
        assert len(records) == 200
        assert report.malformed == 1
        assert report.malformed_lines == [202]

    def test_out_of_span_rows_dropped(self, tmp_path):
        records, report = load_records(
            write_csv(tmp_path, "c1,2014-12-28,1,1\nc1,2015-05-28,1,1\nc1,2015-04-28,1,0\n"),
            SCHEMA,
            with_report=True,
        )
        assert records == [TransactionRecord("c1", "save", 3, 1.0)]
        assert report.out_of_span == 2 and report.malformed == 0

    def test_threshold_exceeded(self, tmp_path):
        with pytest.raises(IngestError, match="malformed"):
            load_records(write_csv(tmp_path, "c1,2015-01-28,1,0\nc2,2015-01-28,-1,0\n"), SCHEMA)

    def test_unknown_column(self, tmp_path):
        schema = IngestSchema("client", "date", ("save", "card"))
        with pytest.raises(IngestError, match="card"):
            load_records(write_csv(tmp_path, ""), schema)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_records(tmp_path / "absent.csv", SCHEMA)

    def test_schema_from_json(self, tmp_path):
        path = tmp_path / "schema.json"
        path.write_text(json.dumps({"client_column": "client", "date_column": "date",
                                    "labels": ["save", "loan"], "n_slices": 4}))
        assert IngestSchema.from_json(path) == SCHEMA
        path.write_text(json.dumps({"client_column": "c", "date_column": "d",
                                    "labels": ["x"], "colour": 1}))
        with pytest.raises(ValueError, match="colour"):
            IngestSchema.from_json(path)


def rec(client, label="save", month=0, value=1.0):
    return TransactionRecord(client, label, month, value)


class TestTopClients:
    def test_counts(self):
        records = [rec("a")] * 5 + [rec("b")] * 3 + [rec("c")]
        assert select_top_clients(records, 2) == {"a": 0, "b": 1}

    def test_tie_prefers_smaller_id(self):
        records = [rec("z")] * 3 + [rec("m")] * 2 + [rec("k")] * 2
        assert select_top_clients(records, 2) == {"z": 0, "k": 1}

    def test_matches_sort_oracle(self, rng):
        ids = [f"id{n:02d}" for n in rng.integers(0, 30, size=400)]
        records = [rec(c) for c in ids]
        counts = Counter(ids)
        oracle = sorted(counts, key=lambda c: (-counts[c], c))[:10]
        assert list(select_top_clients(records, 10)) == oracle

    def test_stable_under_shuffle(self, rng):
        records = [rec(f"id{n}") for n in rng.integers(0, 15, size=100)]
        shuffled = [records[n] for n in rng.permutation(len(records))]
        assert select_top_clients(records, 5) == select_top_clients(shuffled, 5)

    def test_too_few_clients(self):
        with pytest.raises(ValueError):
            select_top_clients([rec("a")], 2)


def spec_for(clients, labels=("save", "loan"), months=4):
    return TensorSpec(len(clients), len(labels), months, {c: i for i, c in enumerate(clients)}, labels)


class TestBuildTensor:
    def test_no_records(self):
        t = build_tensor([], spec_for(["a", "b"]))
        assert t.shape == (2, 2, 4) and t.nnz == 0

    def test_additivity(self):
        t = build_tensor([rec("a", "loan", 1), rec("a", "loan", 1)], spec_for(["a"]))
        assert t.to_dense()[0, 1, 1] == 2.0 and t.nnz == 1

    def test_dense_oracle_and_order_invariance(self, rng):
        clients = ["a", "b", "c"]
        labels = ("save", "loan", "card")
        records = [
            rec(clients[rng.integers(3)], labels[rng.integers(3)], int(rng.integers(5)),
                float(rng.integers(1, 4)))
            for _ in range(50)
        ]
        spec = spec_for(clients, labels, 5)
        oracle = np.zeros(spec.shape)
        for r in records:
            oracle[clients.index(r.client_id), labels.index(r.label), r.month_index] += r.value
        t = build_tensor(records, spec)
        np.testing.assert_array_equal(t.to_dense(), oracle)
        shuffled = [records[n] for n in rng.permutation(50)]
        assert build_tensor(shuffled, spec) == t

    def test_outside_spec(self):
        with pytest.raises(ValueError):
            build_tensor([rec("a", "loan", 4)], spec_for(["a"]))
        with pytest.raises(ValueError):
            build_tensor([rec("q")], spec_for(["a"]))

    def test_restrict_then_build(self):
        records = [rec("a"), rec("b"), rec("a", "loan", 2)]
        index = select_top_clients(records, 1)
        t = build_tensor(restrict_records(records, index), spec_for(list(index)))
        assert t.nnz == 2


class TestSynth:
    def test_noiseless_dense_observation(self):
        t, truth = synth_generate((6, 4, 8), 3, 0.0, 0.0, seed=1)
        np.testing.assert_array_equal(t.to_dense(), kruskal_to_dense(truth))

    def test_sparsity_count(self):
        t, _ = synth_generate(TensorSpec(), 5, 0.1, 0.9, seed=0)
        cells = 200 * 22 * 16
        tol = 3 * math.sqrt(cells * 0.1 * 0.9)
        assert abs(t.nnz - 0.1 * cells) <= tol

    def test_factors_nonnegative(self):
        _, truth = synth_generate((10, 5, 16), 6, 0.0, 0.0, seed=3)
        assert all((f >= 0).all() for f in truth.factors)

    def test_deterministic(self):
        a = synth_generate((10, 5, 8), 2, 0.1, 0.5, seed=7)
        b = synth_generate((10, 5, 8), 2, 0.1, 0.5, seed=7)
        assert a[0] == b[0] and a[1] == b[1]
        assert synth_generate((10, 5, 8), 2, 0.1, 0.5, seed=8)[0] != a[0]

    @pytest.mark.parametrize(
        "kwargs",
        [dict(true_rank=0), dict(noise_sigma=-1.0), dict(sparsity=1.0), dict(sparsity=-0.1),
         dict(period=0)],
    )
    def test_invalid(self, kwargs):
        args = dict(spec=(4, 3, 2), true_rank=1, noise_sigma=0.0, sparsity=0.0, seed=0)
        args.update(kwargs)
        with pytest.raises(ValueError):
            synth_generate(**args)

    def test_round_trip_recovery(self):
        t, _ = synth_generate((10, 8, 6), 2, 0.0, 0.0, seed=0)
        k, _ = solve(t, NcgConfig(rank=2, max_iters=500, seed=0))
        assert relative_residual(t, k) < 1e-5
