"""Leaf-oriented unbalanced binary search tree.

Dictionary keys live only in leaves; internal nodes carry routing keys
(left subtree strictly below the key, right subtree at or above). Two
permanent sentinel keys above every user key guarantee that each user
leaf has both a parent and a grandparent, so no update ever needs to
write a NIL link:

    entry(INF2) -> [ INF1-side subtree | leaf(INF2) ]

The template bodies replace nodes to make any change (insert replaces the
reached leaf with a three-node subtree or a fresh leaf; delete swings the
grandparent link to a fresh copy of the sibling and finalizes the leaf,
its parent, and the old sibling). The sequential body updates leaf values
in place, links new nodes directly, and unlinks without copying.
"""

from __future__ import annotations

from typing import Any, Iterator

from ..engine import DIRECT
from ..llxscx import FAIL, FINALIZED, DataRecord
from ..policy import Done, OpDescriptor, RESTART
from .base import ConcurrentDictionary, DictConfig, guard_access

__all__ = ["BstDictionary", "BstInternal", "BstLeaf", "INF1", "INF2"]

INF2 = (1 << 63) - 1
INF1 = (1 << 63) - 2


class BstInternal(DataRecord):
    __slots__ = ("key",)

    def __init__(self, layer, key: int, children):
        self.key = key
        super().__init__(layer, links=children)


class BstLeaf(DataRecord):
    __slots__ = ("key", "value")

    def __init__(self, layer, key: int, value):
        self.key = key
        super().__init__(layer)
        self.value = layer.engine.word(value)


class BstDictionary(ConcurrentDictionary):
    def __init__(self, config: DictConfig | None = None):
        super().__init__(config)
        layer = self.layer
        self._entry = BstInternal(layer, INF2, (BstLeaf(layer, INF1, None), BstLeaf(layer, INF2, None)))

    # -- search plumbing -----------------------------------------------------

    def _descend(self, rd, key: int):
        """Walk to the leaf for `key`; returns (gp, gdir, p, pdir, leaf)."""
        gp = None
        gdir = 0
        p = self._entry
        pdir = 0 if key < p.key else 1
        n = rd(p.links[pdir])
        while isinstance(n, BstInternal):
            gp, gdir = p, pdir
            p, pdir = n, (0 if key < n.key else 1)
            n = rd(p.links[pdir])
        return gp, gdir, p, pdir, n

    def _locate(self, mem, key: int, need_gp: bool):
        """Search for the update phase, honoring the search-outside mode.

        Returns (gp, gdir, p, pdir, leaf) with the parent link revalidated,
        or RESTART when the located neighborhood is already stale.
        """
        if self.config.search_outside_txn and mem.transactional:
            found = self._descend(lambda w: w._vv[0], key)
            if self.probe:
                self.probe("pre-update", op="locate")
            gp, gdir, p, pdir, leaf = found
            if need_gp and gp is not None:
                guard_access(mem, gp)
            guard_access(mem, p)
            guard_access(mem, leaf)
            if mem.read(p.links[pdir]) is not leaf:
                return RESTART
            if need_gp and gp is not None and mem.read(gp.links[gdir]) is not p:
                return RESTART
            return found
        found = self._descend(mem.read, key)
        if self.probe:
            self.probe("pre-update", op="locate")
        return found

    # -- insert ----------------------------------------------------------------

    def insert(self, key: int, value: int) -> bool:
        if not key < INF1:
            raise ValueError("key outside the supported universe")
        return self._operate(lambda pid: self._insert_op(pid, key, value))

    def _insert_op(self, pid: int, key: int, value: int) -> OpDescriptor:
        layer = self.layer

        def run_fast(mem):
            found = self._locate(mem, key, need_gp=False)
            if found is RESTART:
                return RESTART
            _gp, _gdir, p, pdir, leaf = found
            if leaf.key == key:
                mem.write(leaf.value, value)
                return Done(False)
            new_leaf = BstLeaf(layer, key, value)
            if key < leaf.key:
                inner = BstInternal(layer, leaf.key, (new_leaf, leaf))
            else:
                inner = BstInternal(layer, key, (leaf, new_leaf))
            mem.write(p.links[pdir], inner)
            return Done(True)

        def run_template(mem):
            rd = mem.read if mem.transactional and not self.config.search_outside_txn else (lambda w: w._vv[0])
            gp, gdir, p, pdir, leaf = self._descend(rd, key)
            if self.probe:
                self.probe("pre-update", op="insert")
            if self.config.search_outside_txn and mem.transactional:
                guard_access(mem, p)
                guard_access(mem, leaf)
            snap_p = self._llx(pid, p, mem)
            if snap_p in (FAIL, FINALIZED):
                return RESTART
            if snap_p[pdir] is not leaf:
                return RESTART
            snap_l = self._llx(pid, leaf, mem)
            if snap_l in (FAIL, FINALIZED):
                return RESTART
            if leaf.key == key:
                replacement = BstLeaf(layer, key, value)
                if self._scx(pid, mem, (p, leaf), (leaf,), (p, pdir), replacement):
                    return Done(False, retire=(leaf,))
                return RESTART
            new_leaf = BstLeaf(layer, key, value)
            leaf_copy = BstLeaf(layer, leaf.key, mem.read(leaf.value))
            if key < leaf.key:
                inner = BstInternal(layer, leaf.key, (new_leaf, leaf_copy))
            else:
                inner = BstInternal(layer, key, (leaf_copy, new_leaf))
            if self._scx(pid, mem, (p, leaf), (leaf,), (p, pdir), inner):
                return Done(True, retire=(leaf,))
            return RESTART

        return OpDescriptor(run_fast, run_template, lambda: run_template(DIRECT))

    # -- delete ----------------------------------------------------------------

    def delete(self, key: int) -> bool:
        if not key < INF1:
            return False
        return self._operate(lambda pid: self._delete_op(pid, key))

    def _delete_op(self, pid: int, key: int) -> OpDescriptor:
        layer = self.layer
        s8 = self.config.search_outside_txn

        def run_fast(mem):
            found = self._locate(mem, key, need_gp=True)
            if found is RESTART:
                return RESTART
            gp, gdir, p, pdir, leaf = found
            if leaf.key != key:
                return Done(False)
            sibling = mem.read(p.links[1 - pdir])
            if s8 and mem.transactional:
                guard_access(mem, sibling)
            mem.write(gp.links[gdir], sibling)
            if s8:
                mem.write(leaf.marked, True)
                mem.write(p.marked, True)
            return Done(True, retire=(leaf, p))

        def run_template(mem):
            rd = mem.read if mem.transactional and not s8 else (lambda w: w._vv[0])
            gp, gdir, p, pdir, leaf = self._descend(rd, key)
            if self.probe:
                self.probe("pre-update", op="delete")
            if leaf.key != key:
                return Done(False)
            if s8 and mem.transactional:
                guard_access(mem, gp)
                guard_access(mem, p)
                guard_access(mem, leaf)
            snap_gp = self._llx(pid, gp, mem)
            if snap_gp in (FAIL, FINALIZED) or snap_gp[gdir] is not p:
                return RESTART
            snap_p = self._llx(pid, p, mem)
            if snap_p in (FAIL, FINALIZED) or snap_p[pdir] is not leaf:
                return RESTART
            sibling = snap_p[1 - pdir]
            snap_l = self._llx(pid, leaf, mem)
            if snap_l in (FAIL, FINALIZED):
                return RESTART
            snap_s = self._llx(pid, sibling, mem)
            if snap_s in (FAIL, FINALIZED):
                return RESTART
            if isinstance(sibling, BstLeaf):
                replacement: DataRecord = BstLeaf(layer, sibling.key, mem.read(sibling.value))
            else:
                replacement = BstInternal(layer, sibling.key, snap_s)
            if self._scx(pid, mem, (gp, p, leaf, sibling), (p, leaf, sibling), (gp, gdir), replacement):
                return Done(True, retire=(p, leaf, sibling))
            return RESTART

        return OpDescriptor(run_fast, run_template, lambda: run_template(DIRECT))

    # -- search ----------------------------------------------------------------

    def search(self, key: int) -> int | None:
        if not key < INF1:
            return None
        return self._operate(lambda pid: self._search_op(pid, key))

    def _search_op(self, pid: int, key: int) -> OpDescriptor:
        def run(mem):
            _gp, _gdir, _p, _pdir, leaf = self._descend(mem.read, key)
            if leaf.key == key:
                return Done(mem.read(leaf.value))
            return Done(None)

        return OpDescriptor(run, run, lambda: run(DIRECT))

    # -- range query -------------------------------------------------------------

    def range_query(self, lo: int, hi: int) -> list[tuple[int, int]]:
        if lo > hi:
            raise ValueError("lo must not exceed hi")
        hi = min(hi, INF1)
        return self._operate(lambda pid: self._range_op(pid, lo, hi))

    def _range_op(self, pid: int, lo: int, hi: int) -> OpDescriptor:
        layer = self.layer

        def run_txn(mem):
            out: list[tuple[int, int]] = []

            def visit(node):
                if isinstance(node, BstLeaf):
                    if lo <= node.key < hi:
                        out.append((node.key, mem.read(node.value)))
                    return
                if lo < node.key:
                    visit(mem.read(node.links[0]))
                if hi > node.key:
                    visit(mem.read(node.links[1]))

            visit(self._entry)
            return Done(out)

        def run_fallback():
            # collect snapshots over the covering subtree, then confirm
            # that no collected record changed before reporting the result
            out: list[tuple[int, int]] = []
            visited: list[tuple[DataRecord, Any]] = []

            def visit(node) -> bool:
                snap = self._llx(pid, node, DIRECT)
                if snap is FAIL or snap is FINALIZED:
                    return False
                visited.append((node, layer.linked_info(pid, node)))
                if isinstance(node, BstLeaf):
                    if lo <= node.key < hi:
                        out.append((node.key, node.value.load()))
                    return True
                if lo < node.key and not visit(snap[0]):
                    return False
                if hi > node.key and not visit(snap[1]):
                    return False
                return True

            if not visit(self._entry):
                return RESTART
            for rec, info in visited:
                cur = rec.info.load()
                if not (cur is info or cur == info):
                    return RESTART
            return Done(out)

        return OpDescriptor(run_txn, run_txn, run_fallback)

    # -- quiescent traversals -------------------------------------------------------

    def items(self) -> Iterator[tuple[int, int]]:
        def walk(node):
            if isinstance(node, BstLeaf):
                if node.key < INF1:
                    yield (node.key, node.value.load())
                return
            yield from walk(node.links[0].load())
            yield from walk(node.links[1].load())

        yield from walk(self._entry)

    def structural_violations(self) -> list[str]:
        problems: list[str] = []
        leaf_keys: list[int] = []

        def walk(node, lo, hi):
            if node.marked.load():
                problems.append(f"reachable node #{node.uid} is marked")
            if isinstance(node, BstLeaf):
                if not (lo <= node.key < hi):
                    problems.append(f"leaf #{node.uid} key {node.key} outside ({lo}, {hi})")
                leaf_keys.append(node.key)
                return
            if not isinstance(node, BstInternal):
                problems.append(f"unexpected object {node!r} linked in the tree")
                return
            if len(node.links) != 2:
                problems.append(f"internal #{node.uid} does not have two children")
                return
            if not (lo < node.key < hi):
                problems.append(f"internal #{node.uid} key {node.key} outside ({lo}, {hi})")
            left, right = node.links[0].load(), node.links[1].load()
            if left is None or right is None:
                problems.append(f"internal #{node.uid} has a NIL child")
                return
            walk(left, lo, node.key)
            walk(right, node.key, hi)

        walk(self._entry, float("-inf"), float("inf"))
        if self._entry.key != INF2:
            problems.append("entry key corrupted")
        for a, b in zip(leaf_keys, leaf_keys[1:]):
            if not a < b:
                problems.append(f"leaf keys out of order: {a} !< {b}")
        return problems
