import json
import warnings
from collections import Counter
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from ier.config import RunConfig
from ier.elimination import gain_filter_records
from ier.errors import BackendUnavailable, ConfigurationError, ParseError, RunInterrupted
from ier.propagation import (
    Runner,
    StratificationWarning,
    Task,
    load_corpus,
    partition_tasks,
    run_cumulative,
    run_successive,
    run_task,
)

from conftest import FIXTURES, synthetic_run_inputs


def tasks(n, n_cats):
    return [Task(f"t{i:04d}", f"cat{i % n_cats}", f"task {i}") for i in range(n)]


def test_partition_of_dataset_sized_corpus():
    batches = partition_tasks(tasks(1200, 40), 6, seed=0)
    assert [len(b.tasks) for b in batches] == [200] * 6
    for b in batches:
        assert set(Counter(t.category for t in b.tasks).values()) == {5}


def test_partition_small_single_category():
    batches = partition_tasks(tasks(6, 1), 3, seed=1)
    assert [len(b.tasks) for b in batches] == [2, 2, 2]


def test_partition_is_seeded():
    a = partition_tasks(tasks(60, 4), 3, seed=5)
    b = partition_tasks(tasks(60, 4), 3, seed=5)
    c = partition_tasks(tasks(60, 4), 3, seed=6)
    ids = lambda bs: [[t.task_id for t in x.tasks] for x in bs]
    assert ids(a) == ids(b) != ids(c)


def test_partition_warns_on_thin_categories():
    with pytest.warns(StratificationWarning):
        batches = partition_tasks(tasks(4, 2), 3, seed=0)
    assert sorted(len(b.tasks) for b in batches) == [1, 1, 2]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 120), st.integers(1, 8), st.integers(1, 7), st.integers(0, 99))
def test_partition_is_a_stratified_set_partition(n, n_cats, n_batches, seed):
    ts = tasks(n, n_cats)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        batches = partition_tasks(ts, n_batches, seed)
    flat = [t.task_id for b in batches for t in b.tasks]
    assert sorted(flat) == sorted(t.task_id for t in ts)
    assert len(flat) == len(set(flat))
    for cat in {t.category for t in ts}:
        counts = [sum(t.category == cat for t in b.tasks) for b in batches]
        assert max(counts) - min(counts) <= 1
    sizes = [len(b.tasks) for b in batches]
    assert max(sizes) - min(sizes) <= 1


def test_corpus_parse_errors_carry_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"task_id": "a", "category": "x", "task_text": "y"}\n{"task_id": "b", "task_text": "z"}\n')
    with pytest.raises(ParseError) as err:
        load_corpus(path)
    assert err.value.line == 2


def _fixture_config(**kw):
    cfg = RunConfig(**kw)
    cfg.backend.fixtures = str(FIXTURES / "scripted.jsonl")
    return cfg


FIX_TASK = Task("t-fix-1", "Finance", "Build a program that prints the total of a list of expenses.")


def test_run_task_follows_the_fixture_script(scripted_agent, sandbox):
    run = run_task(FIX_TASK, None, scripted_agent, sandbox, _fixture_config())
    phases = [e.phase for e in run.chain.edges]
    assert phases == ["coding", "review", "review", "test"]
    assert len(run.chain.nodes) == 5
    assert run.retrievals == [] and run.error is None
    # coding 2 calls, two reviews 4, the stop turn 1, one test 2
    assert run.agent_calls == run.duration == 9
    assert sandbox.compile_and_run(run.chain.terminal.files).executed


def test_run_task_without_review_rounds(scripted_agent, sandbox):
    run = run_task(FIX_TASK, None, scripted_agent, sandbox, _fixture_config(max_review_rounds=0))
    assert "review" not in [e.phase for e in run.chain.edges]
    assert run.chain.edges[0].phase == "coding"


def test_run_task_truncates_on_fixture_gap(scripted_agent, sandbox):
    task = Task("t-missing", "Finance", "unscripted")
    run = run_task(task, None, scripted_agent, sandbox, _fixture_config())
    assert run.error and len(run.chain.nodes) == 1


def test_run_task_propagates_unavailable_backend(sandbox):
    class Down:
        def propose_instruction(self, *a):
            raise BackendUnavailable("down")

    with pytest.raises(BackendUnavailable):
        run_task(FIX_TASK, None, Down(), sandbox, _fixture_config())


@pytest.fixture(scope="module")
def three_patterns(tmp_path_factory, sandbox):
    from ier.backends import HashingEmbedder

    out = {}
    for pattern in ("successive", "cumulative", "eliminated"):
        batches, agent, cfg = synthetic_run_inputs(tmp_path_factory.mktemp("synth"), pattern=pattern, epsilon=0.3)
        out[pattern] = Runner(cfg, agent, HashingEmbedder(), sandbox).run(batches)
    return out


def test_first_batch_never_retrieves(three_patterns):
    for results in three_patterns.values():
        assert results[0].retrieval_log == [] and len(results[0].active) == 0


def test_successive_provenance(three_patterns):
    res = three_patterns["successive"]
    for i, r in enumerate(res[1:], start=2):
        assert r.active.origin_batches() == {i - 1}
        assert len(r.active) == len(res[i - 2].acquired)
        assert {e["origin_batch"] for e in r.retrieval_log} == {i - 1}


def test_cumulative_provenance_and_growth(three_patterns):
    res = three_patterns["cumulative"]
    sizes = [len(r.active) for r in res]
    assert sizes == sorted(sizes)
    for i, r in enumerate(res[1:], start=2):
        assert r.active.origin_batches() == set(range(1, i))


def test_eliminated_second_batch_is_gain_filtered_first(three_patterns):
    res = three_patterns["eliminated"]
    expected = {r.id for r in gain_filter_records(res[0].acquired.records(), 0.3)}
    assert res[1].active.ids() == expected
    assert res[1].elimination["freq_kept"] == 0
    assert res[2].elimination["retained"] == len(res[2].active)


def test_active_pool_counts_are_per_batch(three_patterns):
    for results in three_patterns.values():
        for r in results:
            assert r.active.total_freq() == len(r.retrieval_log)


def test_successive_and_cumulative_agree_on_first_two_batches(three_patterns):
    s, c = three_patterns["successive"], three_patterns["cumulative"]
    for i in range(2):
        assert s[i].metrics == c[i].metrics
        assert s[i].acquired.records() == c[i].acquired.records()


def test_pattern_wrappers_check_config(tmp_path, sandbox):
    from ier.backends import HashingEmbedder

    batches, agent, cfg = synthetic_run_inputs(tmp_path, n_tasks=3, n_batches=1)
    assert len(run_successive(batches, agent, HashingEmbedder(), sandbox, cfg)) == 1
    with pytest.raises(ConfigurationError):
        run_cumulative(batches, agent, HashingEmbedder(), sandbox, cfg)


class DownFor:
    """Delegates to a real agent but reports the service as down for some tasks."""

    def __init__(self, agent, task_ids):
        self.agent, self.task_ids = agent, set(task_ids)

    def propose_instruction(self, turn, shots):
        if turn.task_id in self.task_ids:
            raise BackendUnavailable("quota exhausted")
        return self.agent.propose_instruction(turn, shots)

    def respond_solution(self, *a):
        return self.agent.respond_solution(*a)

    def pseudo_instruction(self, *a):
        return self.agent.pseudo_instruction(*a)


def _tree(run_dir):
    return {p.relative_to(run_dir).as_posix(): p.read_bytes() for p in sorted(run_dir.rglob("*")) if p.is_file()}


def test_resume_after_interrupt_matches_clean_run(tmp_path, sandbox):
    from ier.backends import HashingEmbedder

    batches, agent, cfg = synthetic_run_inputs(tmp_path / "data", n_tasks=9, n_batches=3, pattern="cumulative")
    clean = tmp_path / "clean"
    Runner(cfg, agent, HashingEmbedder(), sandbox, clean).run(batches)

    broken = tmp_path / "broken"
    down = DownFor(agent, [t.task_id for t in batches[1].tasks])
    with pytest.raises(RunInterrupted):
        Runner(cfg, down, HashingEmbedder(), sandbox, broken).run(batches)
    assert sorted(p.parent.name for p in broken.glob("batch-*/metrics.json")) == ["batch-1"]
    assert not (broken / ".lock").exists()
    # a finished batch is never silently overwritten
    with pytest.raises(ConfigurationError):
        Runner(cfg, agent, HashingEmbedder(), sandbox, broken).run(batches)
    Runner(cfg, agent, HashingEmbedder(), sandbox, broken, resume=True).run(batches)
    assert _tree(broken) == _tree(clean)


def test_resume_rejects_changed_config(tmp_path, sandbox):
    from ier.backends import HashingEmbedder

    batches, agent, cfg = synthetic_run_inputs(tmp_path / "data", n_tasks=3, n_batches=1)
    Runner(cfg, agent, HashingEmbedder(), sandbox, tmp_path / "run").run(batches)
    with pytest.raises(ConfigurationError):
        Runner(replace(cfg, k=2), agent, HashingEmbedder(), sandbox, tmp_path / "run", resume=True).run(batches)
    # worker count may change between attempts
    Runner(replace(cfg, workers=2), agent, HashingEmbedder(), sandbox, tmp_path / "run", resume=True).run(batches)


def test_lock_blocks_concurrent_runs(tmp_path, sandbox):
    from ier.backends import HashingEmbedder

    batches, agent, cfg = synthetic_run_inputs(tmp_path / "data", n_tasks=3, n_batches=1)
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    (run_dir / ".lock").write_text("123")
    with pytest.raises(ConfigurationError):
        Runner(cfg, agent, HashingEmbedder(), sandbox, run_dir).run(batches)


def test_checkpoint_layout(tmp_path, sandbox):
    from ier.backends import HashingEmbedder

    batches, agent, cfg = synthetic_run_inputs(tmp_path / "data", n_tasks=6, n_batches=2)
    run_dir = tmp_path / "run"
    Runner(cfg, agent, HashingEmbedder(), sandbox, run_dir).run(batches)
    for i in (1, 2):
        names = {p.name for p in (run_dir / f"batch-{i}").iterdir()}
        assert {"chains.jsonl", "pool.jsonl", "metrics.json"} <= names
    summary = json.loads((run_dir / "batch-2" / "metrics.json").read_text())
    assert summary["active_origin_batches"] == [1]
    assert json.loads((run_dir / "batches.json").read_text()) == {t.task_id: b.ordinal for b in batches for t in b.tasks}
    assert "token" not in (run_dir / "config.json").read_text().lower().replace("token_env", "")


def test_parallel_workers_give_identical_results(tmp_path, sandbox):
    from ier.backends import HashingEmbedder

    batches, agent, cfg = synthetic_run_inputs(tmp_path / "data", n_tasks=8, n_batches=2, pattern="cumulative")
    Runner(cfg, agent, HashingEmbedder(), sandbox, tmp_path / "a").run(batches)
    Runner(replace(cfg, workers=4), agent, HashingEmbedder(), sandbox, tmp_path / "b").run(batches)
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    a.pop("config.json"), b.pop("config.json")
    assert a == b
