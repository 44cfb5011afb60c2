import itertools

import pytest
from hypothesis import given, strategies as st

from ier.chain import (
    EMPTY_ARTIFACT_TEXT,
    Instruction,
    Solution,
    append_step,
    dump_chains,
    flatten_files,
    load_chains,
    new_chain,
    nonadjacent_pairs,
    reachable,
)
from ier.errors import InvalidArgument, ParseError, SequencingError

from conftest import build_chain


def test_new_chain_has_single_empty_node():
    chain = new_chain("t1", "calc app")
    assert len(chain.nodes) == 1 and len(chain.edges) == 0
    assert chain.nodes[0].files == ()


def test_new_chain_rejects_empty_task():
    with pytest.raises(InvalidArgument):
        new_chain("t1", "")


def test_new_chain_initial_artifact_has_zero_files():
    assert len(new_chain("t2", "game").nodes[0].files) == 0


def test_append_grows_both_sides():
    chain = new_chain("t1", "calc app")
    append_step(chain, Instruction("do it", 1), Solution("t1", 1, (("main.py", "x = 1\n"),)))
    assert (len(chain.nodes), len(chain.edges)) == (2, 1)


def test_append_out_of_order_is_a_sequencing_error():
    chain = build_chain(2)
    with pytest.raises(SequencingError):
        append_step(chain, Instruction("x", 2), Solution("t1", 5))
    with pytest.raises(SequencingError):
        append_step(chain, Instruction("x", 7), Solution("t1", 2))


def test_three_appends_index_nodes_and_edges():
    chain = build_chain(4)
    assert [n.index for n in chain.nodes] == [0, 1, 2, 3]
    assert [e.index for e in chain.edges] == [1, 2, 3]


@pytest.mark.parametrize("n, expected", [(4, [(0, 2), (0, 3), (1, 3)]), (2, [])])
def test_nonadjacent_pairs_examples(n, expected):
    assert nonadjacent_pairs(build_chain(n)) == expected


def test_nonadjacent_pairs_six_nodes():
    assert len(nonadjacent_pairs(build_chain(6))) == 10


@given(st.integers(min_value=1, max_value=50))
def test_nonadjacent_pairs_matches_enumeration(n):
    brute = sorted((i, j) for i, j in itertools.product(range(n), repeat=2) if j - i >= 2)
    pairs = nonadjacent_pairs(n)
    assert pairs == brute
    assert len(pairs) == (n - 1) * (n - 2) // 2
    assert all(j != i + 1 and j != i for i, j in pairs)


@pytest.mark.parametrize("i, j, expected", [(0, 3, True), (3, 3, False), (4, 1, False)])
def test_reachable(i, j, expected):
    assert reachable(build_chain(5), i, j) is expected


def test_reachable_out_of_range():
    with pytest.raises(InvalidArgument):
        reachable(build_chain(3), 0, 3)


@given(st.integers(min_value=1, max_value=20))
def test_edges_one_fewer_than_nodes(n):
    chain = build_chain(n)
    assert len(chain.edges) == len(chain.nodes) - 1


def test_appending_does_not_touch_existing_steps():
    chain = build_chain(3)
    before = [(s.index, s.files) for s in chain.nodes], list(chain.edges)
    append_step(chain, Instruction("more", 3), Solution("t1", 3, (("a.py", "1\n"),)))
    assert [(s.index, s.files) for s in chain.nodes[:3]] == before[0]
    assert chain.edges[:2] == before[1]


def test_flatten_is_path_ordered_and_order_independent():
    a = (("b.py", "B"), ("a.py", "A\n"))
    b = (("a.py", "A\n"), ("b.py", "B"))
    assert flatten_files(a) == flatten_files(b) == "### a.py\nA\n### b.py\nB\n"
    assert flatten_files(()) == EMPTY_ARTIFACT_TEXT


def test_chain_log_round_trip(tmp_path):
    chains = [build_chain(4, "t1"), build_chain(1, "t2", "game")]
    chains[0].nodes[2].compiled = True
    path = tmp_path / "chains.jsonl"
    dump_chains(chains, path)
    back = load_chains(path)
    assert [c.task_id for c in back] == ["t1", "t2"]
    assert back[0].nodes[2].compiled is True
    assert [(n.index, n.files) for n in back[0].nodes] == [(n.index, n.files) for n in chains[0].nodes]
    assert [(e.index, e.text, e.pseudo) for e in back[0].edges] == [(e.index, e.text, e.pseudo) for e in chains[0].edges]
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    dump_chains(back, tmp_path / "again.jsonl")
    assert (tmp_path / "again.jsonl").read_bytes() == raw


def test_chain_log_reports_bad_line(tmp_path):
    path = tmp_path / "chains.jsonl"
    dump_chains([build_chain(2)], path)
    with open(path, "a") as f:
        f.write('{"task_id": "x", "task_text": "y", "nodes": [], "edges": []}\n')
    with pytest.raises(ParseError) as err:
        load_chains(path)
    assert err.value.line == 2
