import random

import pytest
from hypothesis import given, settings, strategies as st

from tripath.policy import FAST, PolicyKind
from tripath.trees import AbTreeDictionary, DictConfig
from tripath.trees.abtree import AbInternal, AbLeaf

ALL_POLICIES = list(PolicyKind)


def make_tree(policy=PolicyKind.THREE_PATH, a=2, b=3, **kw):
    return AbTreeDictionary(DictConfig(policy=policy, a=a, b=b, **kw))


def all_nodes(d):
    out = []

    def walk(node):
        out.append(node)
        if isinstance(node, AbInternal):
            for w in node.links:
                walk(w.load())

    walk(d._entry.links[0].load())
    return out


def test_requires_admissible_degree_bounds():
    with pytest.raises(ValueError):
        make_tree(a=4, b=5)  # violates b >= 2a - 1


def test_insert_search_delete_roundtrip():
    d = make_tree()
    assert d.search(7) is None
    assert d.insert(7, 70) is True
    assert d.insert(7, 71) is False
    assert d.search(7) == 71
    assert d.delete(7) is True
    assert d.delete(7) is False
    assert d.search(7) is None


def test_leaf_split_creates_even_halves_and_tagged_parent():
    # exercise one template-path insert into a full non-root leaf and stop
    # before the repair loop runs, to observe the transient shape
    d = make_tree(PolicyKind.NON_HTM)
    pid = d.register_thread()
    for k in (1, 2, 3, 4, 5):
        d.insert(k, k)
    full_leaf = next(n for n in all_nodes(d) if isinstance(n, AbLeaf) and n.count.load() == 3)
    key = full_leaf.key_words[0].load() + 0  # a key routed into that leaf
    target = 6 if full_leaf.key_words[2].load() == 5 else key
    op = d._insert_op(pid, target, target)
    done = op.run_fallback()
    assert done.value is True
    assert done.hint == target  # a violation was left behind
    tagged = [n for n in all_nodes(d) if isinstance(n, AbInternal) and n.tagged]
    assert len(tagged) == 1
    kids = [w.load() for w in tagged[0].links]
    assert [k.count.load() for k in kids] == [2, 2]  # (b + 1) pairs split evenly

    # the repair loop then absorbs the tag; afterwards the tree is clean
    d.drain_rebalance()
    assert d.structural_violations() == []
    assert d.search(target) == target


def test_dictionary_inserts_repair_before_returning():
    d = make_tree()
    for k in range(40):
        d.insert(k, k)
        assert [n for n in all_nodes(d) if isinstance(n, AbInternal) and n.tagged] == []
    assert d.structural_violations() == []


def test_fast_path_inserts_into_nonfull_leaf_allocate_nothing():
    d = make_tree(PolicyKind.THREE_PATH, a=6, b=16)
    pid = d.register_thread()
    d.insert(100, 1)
    base = d.layer.alloc_count(pid)
    for k in range(101, 110):  # all land in the single root leaf
        assert d.insert(k, k) is True
    for k in range(101, 110):
        assert d.insert(k, -k) is False  # in-place value updates
    for k in range(101, 110):
        assert d.delete(k) is True  # in-place removals, root exempt
    assert d.layer.alloc_count(pid) == base
    assert d.stats.snapshot()[FAST]["completions"] > 0


def test_fast_path_split_allocates_parent_and_sibling_only():
    d = make_tree(PolicyKind.THREE_PATH, a=2, b=3)
    pid = d.register_thread()
    for k in (1, 2, 3, 4, 5):
        d.insert(k, k)
    d.drain_rebalance()
    full_leaf = next(n for n in all_nodes(d) if isinstance(n, AbLeaf) and n.count.load() == 3)
    target = max(full_leaf.key_words[i].load() for i in range(3)) + 1
    base = d.layer.alloc_count(pid)
    assert d.insert(target, target) is True
    # split: one fresh sibling + one fresh parent; repair may add more, so
    # measure the op body in isolation via a fresh full leaf instead
    assert d.layer.alloc_count(pid) >= base + 2
    d.drain_rebalance()
    assert d.structural_violations() == []


def test_underfull_leaf_shares_with_rich_sibling():
    d = make_tree(PolicyKind.NON_HTM)
    for k in (1, 2, 3, 4, 5):
        d.insert(k, k)
    # leaves now hold [1,2] and [3,4,5]
    assert d.delete(1) is True  # leaves degree-1 leaf; sibling has degree 3
    assert d.structural_violations() == []
    leaves = [n for n in all_nodes(d) if isinstance(n, AbLeaf)]
    assert sorted(leaf.count.load() for leaf in leaves) == [2, 2]
    assert dict(d.items()) == {2: 2, 3: 3, 4: 4, 5: 5}


def test_underfull_leaf_joins_with_minimal_sibling_and_root_shrinks():
    d = make_tree(PolicyKind.NON_HTM)
    for k in (1, 2, 3, 4, 5):
        d.insert(k, k)
    d.delete(1)  # share: [2,3] and [4,5]
    d.delete(2)  # join: merged [3,4,5]; the degree-1 root then shrinks away
    assert d.structural_violations() == []
    root = d._entry.links[0].load()
    assert isinstance(root, AbLeaf)
    assert dict(d.items()) == {3: 3, 4: 4, 5: 5}


def test_delete_to_empty_and_reuse():
    d = make_tree()
    for k in range(12):
        d.insert(k, k)
    for k in range(12):
        assert d.delete(k) is True
    assert list(d.items()) == []
    assert d.structural_violations() == []
    assert d.insert(3, 33) is True
    assert d.search(3) == 33


@pytest.mark.parametrize("policy", ALL_POLICIES)
def test_small_workout_all_policies(policy):
    d = make_tree(policy, a=2, b=4)
    model = {}
    rng = random.Random(9)
    for _ in range(500):
        k = rng.randrange(48)
        op = rng.random()
        if op < 0.45:
            assert d.insert(k, k * 3) == (k not in model)
            model[k] = k * 3
        elif op < 0.9:
            assert d.delete(k) == (k in model)
            model.pop(k, None)
        else:
            assert d.search(k) == model.get(k)
    assert dict(d.items()) == model
    d.drain_rebalance()
    assert d.structural_violations() == []


def test_range_query_basics():
    d = make_tree()
    assert d.range_query(0, 50) == []
    for k in (1, 3, 5, 7, 9):
        d.insert(k, k * 10)
    assert d.range_query(2, 8) == [(3, 30), (5, 50), (7, 70)]
    assert d.range_query(3, 4) == [(3, 30)]
    with pytest.raises(ValueError):
        d.range_query(9, 3)


def test_range_query_on_deep_tree():
    d = make_tree(a=2, b=3)
    for k in range(60):
        d.insert(k, k)
    assert d.range_query(17, 29) == [(k, k) for k in range(17, 29)]


def test_bulk_inserts_balance_after_quiesce():
    d = AbTreeDictionary(DictConfig(policy=PolicyKind.THREE_PATH, a=6, b=16, capacity_limit=512))
    rng = random.Random(2024)
    for _ in range(10_000):
        d.insert(rng.randrange(1 << 40), 1)
    d.drain_rebalance()
    assert d.structural_violations() == []
    keys = [k for k, _ in d.items()]
    assert keys == sorted(keys)


def test_alternating_stress_then_quiesce():
    d = make_tree(a=2, b=4)
    rng = random.Random(31)
    model = {}
    for _ in range(3000):
        k = rng.randrange(200)
        if rng.random() < 0.5:
            d.insert(k, k)
            model[k] = k
        else:
            d.delete(k)
            model.pop(k, None)
    d.drain_rebalance()
    assert d.structural_violations() == []
    assert dict(d.items()) == model


def test_structural_validator_flags_unbalanced_leaves():
    d = make_tree()
    for k in range(20):
        d.insert(k, k)
    assert d.structural_violations() == []
    # corrupt: replace a leaf with an over-deep internal node
    victim_parent = next(
        n for n in all_nodes(d) if isinstance(n, AbInternal)
        and isinstance(n.links[0].load(), AbLeaf)
    )
    leaf = victim_parent.links[0].load()
    fake = AbInternal(d.layer, (leaf.key_words[0].load() + 1,), (leaf, leaf), tagged=False)
    victim_parent.links[0].store(fake)
    assert d.structural_violations() != []


@settings(deadline=None, max_examples=30)
@given(
    ops=st.lists(
        st.tuples(st.sampled_from(["i", "d", "s"]), st.integers(0, 20), st.integers(0, 99)),
        max_size=80,
    ),
    policy=st.sampled_from(ALL_POLICIES),
)
def test_matches_model_dict_on_random_sequences(ops, policy):
    d = make_tree(policy, a=2, b=3)
    model = {}
    for kind, k, v in ops:
        if kind == "i":
            assert d.insert(k, v) == (k not in model)
            model[k] = v
        elif kind == "d":
            assert d.delete(k) == (k in model)
            model.pop(k, None)
        else:
            assert d.search(k) == model.get(k)
    assert dict(d.items()) == model
    d.drain_rebalance()
    assert d.structural_violations() == []
