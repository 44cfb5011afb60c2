import pytest
from hypothesis import given, strategies as st

from ier.backends import Sandbox
from ier.chain import Instruction, Solution, append_step, flatten_files, new_chain
from ier.errors import InvalidArgument, InvalidState, UndefinedMetric
from ier.metrics import (
    MetricBundle,
    PhaseEfficiency,
    batch_metrics,
    completeness,
    consistency,
    executability,
    phase_efficiency,
    quality,
    utilization_matrix,
)

from conftest import TableEmbedder

# alpha, beta, gamma, quality as published
TABLE_ROWS = {
    "GPTEngineer": (0.4824, 0.3583, 0.7887, 0.1363),
    "MetaGPT": (0.4472, 0.4208, 0.7649, 0.1439),
    "ChatDev": (0.7337, 0.8040, 0.7909, 0.4665),
    "ECL": (0.8442, 0.8643, 0.7915, 0.5775),
    "IER-Successive": (0.8744, 0.9146, 0.7968, 0.6372),
    "IER-Cumulative": (0.8492, 0.9347, 0.7983, 0.6337),
}


def test_completeness_counts_todo_free_artifacts(metrics_corpus):
    assert completeness([r["files"] for r in metrics_corpus[:3]]) == pytest.approx(2 / 3)


def test_completeness_extremes():
    todo, clean = (("a.py", "# TODO\n"),), (("a.py", "pass\n"),)
    assert completeness([todo, todo]) == 0.0
    assert completeness([clean, clean]) == 1.0
    assert completeness([(("a.py", "# todo later\n"),)]) == 1.0


def test_completeness_of_nothing_is_undefined():
    with pytest.raises(UndefinedMetric):
        completeness([])


@given(st.permutations([("a.py", "x = 1\n"), ("b.py", "# TODO\n"), ("c.py", "y = 2\n")]))
def test_completeness_ignores_file_order(files):
    assert completeness([tuple(files)]) == 0.0


def test_executability_on_fixture_corpus(metrics_corpus, sandbox):
    assert executability([r["files"] for r in metrics_corpus], sandbox) == 0.75
    for r in metrics_corpus:
        outcome = sandbox.compile_and_run(r["files"])
        assert (outcome.compiled and outcome.executed) is r["runs"]


def test_executability_counts_empty_artifact_as_failure(sandbox):
    assert executability([(), (("main.py", "print(1)\n"),)], sandbox) == 0.5


def test_consistency_self_similarity(embedder):
    files = (("main.py", "print('hello world')\n"),)
    assert consistency([(flatten_files(files), files)], embedder) == pytest.approx(1.0)


def test_consistency_orthogonal_and_mixed():
    f1, f2 = (("a.py", "one\n"),), (("a.py", "two\n"),)
    emb = TableEmbedder({
        "req one": [1, 0],
        flatten_files(f1): [0, 1],
        "req two": [1, 0],
        flatten_files(f2): [0.5, 0.75 ** 0.5],
    })
    assert consistency([("req one", f1)], emb) == 0.0
    # constructed similarities 1.0 and 0.5
    emb.table["req one"] = emb.table[flatten_files(f1)]
    assert consistency([("req one", f1), ("req two", f2)], emb) == pytest.approx(0.75)


@pytest.mark.parametrize("name", list(TABLE_ROWS))
def test_quality_reproduces_published_rows(name):
    a, b, g, q = TABLE_ROWS[name]
    assert quality(a, b, g) == pytest.approx(q, abs=1e-3)


def test_quality_examples():
    assert quality(0.8744, 0.9146, 0.7968) == pytest.approx(0.6372, abs=5e-4)
    assert quality(0.8442, 0.8643, 0.7915) == pytest.approx(0.5775, abs=5e-4)
    assert quality(1, 1, 1) == 1


def test_quality_rejects_out_of_range():
    with pytest.raises(InvalidArgument):
        quality(1.2, 0.5, 0.5)


unit_interval = st.floats(0, 1)


@given(unit_interval, unit_interval, unit_interval)
def test_quality_bounded_by_each_factor(a, b, g):
    q = quality(a, b, g)
    assert 0 <= q <= min(a, b, g)


def test_phase_efficiency_examples():
    assert phase_efficiency((3, 3), 3, 3) == PhaseEfficiency(0.0, 0.0, 0.0)
    eff = phase_efficiency((1, 3), 3, 3)
    assert eff.review == pytest.approx(2 / 3)
    assert eff.overall == pytest.approx(2 / 6)
    assert phase_efficiency((0, 0), 3, 3) == PhaseEfficiency(1.0, 1.0, 1.0)
    assert phase_efficiency((0, 2), 0, 4).review == 0.0


def test_phase_efficiency_reads_chain_phases():
    chain = new_chain("t", "app")
    for k, phase in enumerate(["coding", "review", "review", "test"], start=1):
        append_step(chain, Instruction("x", k, phase=phase), Solution("t", k, (("m.py", f"{k}\n"),)))
    eff = phase_efficiency(chain, 3, 3)
    assert (eff.review, eff.test) == pytest.approx((1 / 3, 2 / 3))


def test_phase_efficiency_rejects_rounds_above_cap():
    with pytest.raises(InvalidArgument):
        phase_efficiency((4, 0), 3, 3)


def test_utilization_successive_shape():
    hits = [(2, 1), (2, 1), (3, 2), (4, 3), (4, 3)]
    m = utilization_matrix(hits, 4)
    for i in range(4):
        for j in range(4):
            assert m[i][j] == (1.0 if (i >= 1 and j == i - 1) else 0.0)


def test_utilization_row_normalization():
    m = utilization_matrix([(3, 1), (3, 1), (3, 2), (3, 2)], 4)
    assert m[2] == [0.5, 0.5, 0.0, 0.0]
    assert m[0] == m[1] == m[3] == [0.0] * 4


def test_utilization_rejects_future_origin():
    with pytest.raises(InvalidState):
        utilization_matrix([(2, 2)], 3)


@given(st.lists(st.integers(2, 6).flatmap(lambda c: st.tuples(st.just(c), st.integers(1, c - 1)))))
def test_utilization_is_lower_triangular_and_stochastic(hits):
    m = utilization_matrix(hits, 6)
    for i, row in enumerate(m):
        assert all(v == 0 for v in row[i:])
        assert sum(row) == pytest.approx(1.0 if any(c == i + 1 for c, _ in hits) else 0.0, abs=1e-9)


def test_batch_metrics_bundle(embedder, sandbox):
    chains = []
    for n, body in enumerate(["print('ok')\n", "# TODO\nprint(1)\n"]):
        c = new_chain(f"t{n}", "print things")
        append_step(c, Instruction("code", 1, phase="coding"), Solution(c.task_id, 1, (("main.py", body),)))
        append_step(c, Instruction("review", 2, phase="review"), Solution(c.task_id, 2, (("main.py", body),)))
        chains.append(c)
    bundle = batch_metrics(chains, sandbox, embedder, [2.0, 4.0], 3, 3)
    assert (bundle.completeness, bundle.executability) == (0.5, 1.0)
    assert bundle.quality == pytest.approx(bundle.completeness * bundle.executability * bundle.consistency)
    assert bundle.mean_duration_seconds == 3.0
    assert bundle.mean_review_rounds == 1.0 and bundle.test_efficiency == 1.0
    assert MetricBundle.from_dict(bundle.to_dict()) == bundle


def test_executability_with_custom_runner(tmp_path):
    # a runner whose run command is a plain shell success
    runner = Sandbox(run_cmd=("true",))
    assert executability([(("x.py", "1\n"),)], runner) == 1.0
