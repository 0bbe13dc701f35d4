"""Relaxed (a,b)-tree: a B-tree variant tolerant of transient imbalance.

Leaves hold up to `b` key/value pairs in sorted word slots; internal nodes
hold an immutable tuple of routing keys plus child link words (child i
covers keys in [keys[i-1], keys[i])). Balance may be violated transiently
in two ways: a *tagged* internal node (a too-tall two-child subtree left
behind by a split) and an *underfull* node (degree < a, non-root). The
updater that creates a violation repairs it before returning, one local
replacement step at a time:

* tagged node under a non-full parent  -> absorbed into a new parent copy
* tagged node under a full parent      -> parent splits; the tag moves up
  (or dissolves when the parent is the root)
* underfull node, sibling degree > a   -> contents redistributed evenly
* underfull node, sibling degree <= a  -> nodes joined; the parent shrinks
* internal root of degree 1            -> replaced by a copy of its child

All rebalancing creates new nodes and swings one link, so internal node
content never changes in place. Only the sequential path mutates leaf
content directly; the template paths always replace the leaf.
"""

from __future__ import annotations

from bisect import bisect_right
from typing import Any, Iterator

from ..engine import DIRECT
from ..llxscx import FAIL, FINALIZED, DataRecord
from ..policy import Done, OpDescriptor, RESTART
from .base import ConcurrentDictionary, DictConfig, guard_access

__all__ = ["AbTreeDictionary", "AbInternal", "AbLeaf"]


class AbLeaf(DataRecord):
    __slots__ = ("count", "key_words", "val_words")

    def __init__(self, layer, capacity: int, pairs):
        super().__init__(layer)
        engine = layer.engine
        self.count = engine.word(len(pairs))
        keys = [0] * capacity
        vals = [0] * capacity
        for i, (k, v) in enumerate(pairs):
            keys[i] = k
            vals[i] = v
        self.key_words = tuple(engine.word(k) for k in keys)
        self.val_words = tuple(engine.word(v) for v in vals)


class AbInternal(DataRecord):
    __slots__ = ("keys", "tagged")

    def __init__(self, layer, keys, children, tagged: bool):
        self.keys = tuple(keys)
        self.tagged = tagged
        super().__init__(layer, links=children)
        assert len(self.links) == len(self.keys) + 1


class AbTreeDictionary(ConcurrentDictionary):
    def __init__(self, config: DictConfig | None = None):
        super().__init__(config)
        self._a = self.config.a
        self._b = self.config.b
        if self._b < 2 * self._a - 1:
            raise ValueError("requires b >= 2a - 1")
        # the entry record holds the single root link; the root starts as
        # an empty leaf and is the only node exempt from degree bounds
        self._entry = DataRecord(self.layer, links=(AbLeaf(self.layer, self._b, ()),))

    # -- content helpers ---------------------------------------------------

    def _leaf_find(self, mem, leaf: AbLeaf, cnt: int, key: int) -> tuple[int, bool]:
        lo, hi = 0, cnt
        kw = leaf.key_words
        while lo < hi:
            mid = (lo + hi) // 2
            if mem.read(kw[mid]) < key:
                lo = mid + 1
            else:
                hi = mid
        return lo, lo < cnt and mem.read(kw[lo]) == key

    def _leaf_pairs(self, mem, leaf: AbLeaf, cnt: int) -> list[tuple[int, int]]:
        return [(mem.read(leaf.key_words[i]), mem.read(leaf.val_words[i])) for i in range(cnt)]

    def _new_leaf(self, pairs) -> AbLeaf:
        return AbLeaf(self.layer, self._b, pairs)

    def _children(self, mem, node: AbInternal) -> tuple:
        return tuple(mem.read(w) for w in node.links)

    def _descend_path(self, rd, key: int):
        """Root-to-leaf chain: nodes[j+1] is the child of nodes[j] at idxs[j]."""
        nodes: list[DataRecord] = [self._entry]
        idxs: list[int] = [0]
        node = rd(self._entry.links[0])
        while isinstance(node, AbInternal):
            nodes.append(node)
            i = bisect_right(node.keys, key)
            idxs.append(i)
            node = rd(node.links[i])
        nodes.append(node)
        return nodes, idxs

    def _search_read(self, mem):
        if self.config.search_outside_txn and mem.transactional:
            return lambda w: w._vv[0]
        return mem.read

    # -- insert ---------------------------------------------------------------

    def insert(self, key: int, value: int) -> bool:
        return self._operate(lambda pid: self._insert_op(pid, key, value))

    def _insert_op(self, pid: int, key: int, value: int) -> OpDescriptor:
        s8 = self.config.search_outside_txn

        def run_fast(mem):
            nodes, idxs = self._descend_path(self._search_read(mem), key)
            parent, pidx, leaf = nodes[-2], idxs[-1], nodes[-1]
            if self.probe:
                self.probe("pre-update", op="insert")
            if s8 and mem.transactional:
                if parent is not self._entry:
                    guard_access(mem, parent)
                guard_access(mem, leaf)
            if mem.read(parent.links[pidx]) is not leaf:
                return RESTART
            cnt = mem.read(leaf.count)
            pos, found = self._leaf_find(mem, leaf, cnt, key)
            if found:
                mem.write(leaf.val_words[pos], value)
                return Done(False)
            if cnt < self._b:
                kw, vw = leaf.key_words, leaf.val_words
                for i in range(cnt, pos, -1):
                    mem.write(kw[i], mem.read(kw[i - 1]))
                    mem.write(vw[i], mem.read(vw[i - 1]))
                mem.write(kw[pos], key)
                mem.write(vw[pos], value)
                mem.write(leaf.count, cnt + 1)
                return Done(True)
            # full leaf: keep the left half in place, link a new sibling
            # and a new two-child parent above
            pairs = self._leaf_pairs(mem, leaf, cnt)
            pairs.insert(pos, (key, value))
            keep = (len(pairs) + 1) // 2
            left, right = pairs[:keep], pairs[keep:]
            kw, vw = leaf.key_words, leaf.val_words
            for i, (k, v) in enumerate(left):
                mem.write(kw[i], k)
                mem.write(vw[i], v)
            mem.write(leaf.count, keep)
            sibling = self._new_leaf(right)
            tagged = parent is not self._entry
            top = AbInternal(self.layer, (right[0][0],), (leaf, sibling), tagged)
            mem.write(parent.links[pidx], top)
            return Done(True, hint=key if tagged else None)

        def run_template(mem):
            nodes, idxs = self._descend_path(self._search_read(mem), key)
            parent, pidx, leaf = nodes[-2], idxs[-1], nodes[-1]
            if self.probe:
                self.probe("pre-update", op="insert")
            if s8 and mem.transactional:
                if parent is not self._entry:
                    guard_access(mem, parent)
                guard_access(mem, leaf)
            snap_p = self._llx(pid, parent, mem)
            if snap_p in (FAIL, FINALIZED) or snap_p[pidx] is not leaf:
                return RESTART
            if self._llx(pid, leaf, mem) in (FAIL, FINALIZED):
                return RESTART
            cnt = mem.read(leaf.count)
            pos, found = self._leaf_find(mem, leaf, cnt, key)
            pairs = self._leaf_pairs(mem, leaf, cnt)
            if found:
                pairs[pos] = (key, value)
                new_node: DataRecord = self._new_leaf(pairs)
                hint = None
                result = False
            elif cnt < self._b:
                pairs.insert(pos, (key, value))
                new_node = self._new_leaf(pairs)
                hint = None
                result = True
            else:
                pairs.insert(pos, (key, value))
                keep = (len(pairs) + 1) // 2
                left = self._new_leaf(pairs[:keep])
                right = self._new_leaf(pairs[keep:])
                tagged = parent is not self._entry
                new_node = AbInternal(self.layer, (pairs[keep][0],), (left, right), tagged)
                hint = key if tagged else None
                result = True
            if self._scx(pid, mem, (parent, leaf), (leaf,), (parent, pidx), new_node):
                return Done(result, retire=(leaf,), hint=hint)
            return RESTART

        return OpDescriptor(run_fast, run_template, lambda: run_template(DIRECT))

    # -- delete ---------------------------------------------------------------

    def delete(self, key: int) -> bool:
        return self._operate(lambda pid: self._delete_op(pid, key))

    def _delete_op(self, pid: int, key: int) -> OpDescriptor:
        s8 = self.config.search_outside_txn

        def run_fast(mem):
            nodes, idxs = self._descend_path(self._search_read(mem), key)
            parent, pidx, leaf = nodes[-2], idxs[-1], nodes[-1]
            if self.probe:
                self.probe("pre-update", op="delete")
            if s8 and mem.transactional:
                if parent is not self._entry:
                    guard_access(mem, parent)
                guard_access(mem, leaf)
            if mem.read(parent.links[pidx]) is not leaf:
                return RESTART
            cnt = mem.read(leaf.count)
            pos, found = self._leaf_find(mem, leaf, cnt, key)
            if not found:
                return Done(False)
            kw, vw = leaf.key_words, leaf.val_words
            for i in range(pos, cnt - 1):
                mem.write(kw[i], mem.read(kw[i + 1]))
                mem.write(vw[i], mem.read(vw[i + 1]))
            mem.write(leaf.count, cnt - 1)
            underfull = cnt - 1 < self._a and parent is not self._entry
            return Done(True, hint=key if underfull else None)

        def run_template(mem):
            nodes, idxs = self._descend_path(self._search_read(mem), key)
            parent, pidx, leaf = nodes[-2], idxs[-1], nodes[-1]
            if self.probe:
                self.probe("pre-update", op="delete")
            if s8 and mem.transactional:
                if parent is not self._entry:
                    guard_access(mem, parent)
                guard_access(mem, leaf)
            snap_p = self._llx(pid, parent, mem)
            if snap_p in (FAIL, FINALIZED) or snap_p[pidx] is not leaf:
                return RESTART
            if self._llx(pid, leaf, mem) in (FAIL, FINALIZED):
                return RESTART
            cnt = mem.read(leaf.count)
            pos, found = self._leaf_find(mem, leaf, cnt, key)
            if not found:
                return Done(False)
            pairs = self._leaf_pairs(mem, leaf, cnt)
            del pairs[pos]
            new_leaf = self._new_leaf(pairs)
            if self._scx(pid, mem, (parent, leaf), (leaf,), (parent, pidx), new_leaf):
                underfull = len(pairs) < self._a and parent is not self._entry
                return Done(True, retire=(leaf,), hint=key if underfull else None)
            return RESTART

        return OpDescriptor(run_fast, run_template, lambda: run_template(DIRECT))

    # -- search ---------------------------------------------------------------

    def search(self, key: int) -> int | None:
        return self._operate(lambda pid: self._search_op(pid, key))

    def _search_op(self, pid: int, key: int) -> OpDescriptor:
        def run(mem):
            nodes, _ = self._descend_path(mem.read, key)
            leaf = nodes[-1]
            cnt = mem.read(leaf.count)
            pos, found = self._leaf_find(mem, leaf, cnt, key)
            return Done(mem.read(leaf.val_words[pos]) if found else None)

        return OpDescriptor(run, run, lambda: run(DIRECT))

    # -- range query ------------------------------------------------------------

    def range_query(self, lo: int, hi: int) -> list[tuple[int, int]]:
        if lo > hi:
            raise ValueError("lo must not exceed hi")
        return self._operate(lambda pid: self._range_op(pid, lo, hi))

    def _intersecting_children(self, node: AbInternal, lo: int, hi: int):
        keys = node.keys
        for i in range(len(node.links)):
            low_bound = keys[i - 1] if i > 0 else None
            high_bound = keys[i] if i < len(keys) else None
            if (low_bound is None or low_bound < hi) and (high_bound is None or lo < high_bound):
                yield i

    def _range_op(self, pid: int, lo: int, hi: int) -> OpDescriptor:
        layer = self.layer

        def run_txn(mem):
            out: list[tuple[int, int]] = []

            def visit(node):
                if isinstance(node, AbLeaf):
                    cnt = mem.read(node.count)
                    for i in range(cnt):
                        k = mem.read(node.key_words[i])
                        if lo <= k < hi:
                            out.append((k, mem.read(node.val_words[i])))
                    return
                for i in self._intersecting_children(node, lo, hi):
                    visit(mem.read(node.links[i]))

            visit(mem.read(self._entry.links[0]))
            return Done(out)

        def run_fallback():
            out: list[tuple[int, int]] = []
            visited: list[tuple[DataRecord, Any]] = []

            def visit(node) -> bool:
                snap = self._llx(pid, node, DIRECT)
                if snap is FAIL or snap is FINALIZED:
                    return False
                visited.append((node, layer.linked_info(pid, node)))
                if isinstance(node, AbLeaf):
                    cnt = node.count.load()
                    for i in range(cnt):
                        k = node.key_words[i].load()
                        if lo <= k < hi:
                            out.append((k, node.val_words[i].load()))
                    return True
                return all(visit(snap[i]) for i in self._intersecting_children(node, lo, hi))

            snap_entry = self._llx(pid, self._entry, DIRECT)
            if snap_entry is FAIL or snap_entry is FINALIZED:
                return RESTART
            visited.append((self._entry, layer.linked_info(pid, self._entry)))
            if not visit(snap_entry[0]):
                return RESTART
            for rec, info in visited:
                cur = rec.info.load()
                if not (cur is info or cur == info):
                    return RESTART
            return Done(out)

        return OpDescriptor(run_txn, run_txn, run_fallback)

    # -- rebalancing ------------------------------------------------------------

    def _rebalance_op(self, pid: int, hint: int) -> OpDescriptor:
        def run_fast(mem):
            return self._rebalance_attempt(pid, mem, hint, template=False)

        def run_template(mem):
            return self._rebalance_attempt(pid, mem, hint, template=True)

        return OpDescriptor(run_fast, run_template, lambda: run_template(DIRECT))

    def _rebalance_attempt(self, pid: int, mem, key: int, template: bool):
        """Fix the first violation on the search path for `key`.

        Each step returns the records it unlinked (or RESTART on contention);
        the surrounding hint loop walks the same path again until it is
        clean, since a step may move a violation one level up.
        """
        nodes, idxs = self._descend_path(self._search_read(mem), key)
        for j in range(1, len(nodes)):
            node = nodes[j]
            if j == 1:
                assert not (isinstance(node, AbInternal) and node.tagged)
                # the root is exempt from degree bounds, but an internal
                # root of degree one shrinks the tree by one level
                if isinstance(node, AbInternal) and len(node.links) == 1:
                    removed = self._step_root_shrink(pid, mem, template, node)
                    break
                continue
            gp, gidx = nodes[j - 2], idxs[j - 2]
            parent, pidx = nodes[j - 1], idxs[j - 1]
            if isinstance(node, AbInternal) and node.tagged:
                removed = self._step_resolve_tag(pid, mem, template, gp, gidx, parent, pidx, node)
                break
            deg = len(node.links) if isinstance(node, AbInternal) else mem.read(node.count)
            if deg < self._a:
                removed = self._step_underfull(pid, mem, template, gp, gidx, parent, pidx, node)
                break
        else:
            return Done(None)
        if removed is RESTART:
            return RESTART
        return Done(None, retire=removed, hint=key)

    def _guard_all(self, mem, records) -> None:
        if self.config.search_outside_txn and mem.transactional:
            for rec in records:
                if rec is not self._entry:
                    guard_access(mem, rec)

    def _copy_untagged(self, mem, template, pid, node):
        """Fresh copy of a node (internal copies drop any tag)."""
        if isinstance(node, AbLeaf):
            if template and self._llx(pid, node, mem) in (FAIL, FINALIZED):
                return None
            return self._new_leaf(self._leaf_pairs(mem, node, mem.read(node.count)))
        snap = self._llx(pid, node, mem) if template else self._children(mem, node)
        if snap is FAIL or snap is FINALIZED:
            return None
        return AbInternal(self.layer, node.keys, snap, tagged=False)

    def _step_root_shrink(self, pid: int, mem, template: bool, root: AbInternal):
        entry = self._entry
        self._guard_all(mem, (root,))
        if template:
            snap_e = self._llx(pid, entry, mem)
            if snap_e in (FAIL, FINALIZED) or snap_e[0] is not root:
                return RESTART
            snap_r = self._llx(pid, root, mem)
            if snap_r in (FAIL, FINALIZED):
                return RESTART
            child = snap_r[0]
        else:
            if mem.read(entry.links[0]) is not root:
                return RESTART
            child = mem.read(root.links[0])
        self._guard_all(mem, (child,))
        new_root = self._copy_untagged(mem, template, pid, child)
        if new_root is None:
            return RESTART
        if template:
            if not self._scx(pid, mem, (entry, root, child), (root, child), (entry, 0), new_root):
                return RESTART
        else:
            mem.write(entry.links[0], new_root)
            if self.config.search_outside_txn:
                mem.write(root.marked, True)
                mem.write(child.marked, True)
        return (root, child)

    def _step_resolve_tag(self, pid, mem, template, gp, gidx, parent, pidx, node):
        assert not (isinstance(parent, AbInternal) and parent.tagged)
        self._guard_all(mem, (gp, parent, node))
        if template:
            snap_g = self._llx(pid, gp, mem)
            if snap_g in (FAIL, FINALIZED) or snap_g[gidx] is not parent:
                return RESTART
            snap_p = self._llx(pid, parent, mem)
            if snap_p in (FAIL, FINALIZED) or snap_p[pidx] is not node:
                return RESTART
            snap_t = self._llx(pid, node, mem)
            if snap_t in (FAIL, FINALIZED):
                return RESTART
            p_children, t_children = snap_p, snap_t
        else:
            if mem.read(gp.links[gidx]) is not parent or mem.read(parent.links[pidx]) is not node:
                return RESTART
            p_children = self._children(mem, parent)
            t_children = self._children(mem, node)
        merged_keys = parent.keys[:pidx] + (node.keys[0],) + parent.keys[pidx:]
        merged_children = p_children[:pidx] + t_children + p_children[pidx + 1 :]
        if len(p_children) < self._b:
            # absorb the tagged node into a wider copy of its parent
            replacement = AbInternal(self.layer, merged_keys, merged_children, tagged=False)
        else:
            # parent full: split it; the tag moves one level up unless the
            # parent was the root (growing the tree is legal there)
            m = (len(merged_children) + 1) // 2
            left = AbInternal(self.layer, merged_keys[: m - 1], merged_children[:m], tagged=False)
            right = AbInternal(self.layer, merged_keys[m:], merged_children[m:], tagged=False)
            replacement = AbInternal(
                self.layer, (merged_keys[m - 1],), (left, right), tagged=gp is not self._entry
            )
        return self._finish_step(pid, mem, template, gp, gidx, (parent, node), replacement)

    def _step_underfull(self, pid, mem, template, gp, gidx, parent, pidx, node):
        assert len(parent.links) >= 2  # ancestors were repaired first
        sidx = pidx - 1 if pidx > 0 else pidx + 1
        self._guard_all(mem, (gp, parent, node))
        if template:
            snap_g = self._llx(pid, gp, mem)
            if snap_g in (FAIL, FINALIZED) or snap_g[gidx] is not parent:
                return RESTART
            snap_p = self._llx(pid, parent, mem)
            if snap_p in (FAIL, FINALIZED) or snap_p[pidx] is not node:
                return RESTART
            sibling = snap_p[sidx]
        else:
            if mem.read(gp.links[gidx]) is not parent or mem.read(parent.links[pidx]) is not node:
                return RESTART
            sibling = mem.read(parent.links[sidx])
        if isinstance(sibling, AbInternal) and sibling.tagged:
            # resolve the sibling's tag first; the underfull node stays for
            # the next pass over this search path
            return self._step_resolve_tag(pid, mem, template, gp, gidx, parent, sidx, sibling)
        self._guard_all(mem, (sibling,))
        li, ri = (sidx, pidx) if sidx < pidx else (pidx, sidx)
        left, right = (sibling, node) if sidx < pidx else (node, sibling)
        if template:
            snap_l = self._llx(pid, left, mem)
            if snap_l in (FAIL, FINALIZED):
                return RESTART
            snap_r = self._llx(pid, right, mem)
            if snap_r in (FAIL, FINALIZED):
                return RESTART
        if isinstance(node, AbLeaf):
            lcnt = mem.read(left.count)
            rcnt = mem.read(right.count)
            pairs = self._leaf_pairs(mem, left, lcnt) + self._leaf_pairs(mem, right, rcnt)
            deg_s = rcnt if sidx == ri else lcnt
            if deg_s > self._a:
                m = (len(pairs) + 1) // 2
                new_left: DataRecord = self._new_leaf(pairs[:m])
                new_right: DataRecord = self._new_leaf(pairs[m:])
                new_sep = pairs[m][0]
                replacement = self._parent_after_share(parent, li, ri, new_left, new_right, new_sep,
                                                       snap_p if template else self._children(mem, parent))
            else:
                merged: DataRecord = self._new_leaf(pairs)
                replacement = self._parent_after_join(parent, li, ri, merged,
                                                      snap_p if template else self._children(mem, parent))
        else:
            l_children = snap_l if template else self._children(mem, left)
            r_children = snap_r if template else self._children(mem, right)
            sep = parent.keys[li]
            all_keys = left.keys + (sep,) + right.keys
            all_children = l_children + r_children
            deg_s = len(r_children) if sidx == ri else len(l_children)
            if deg_s > self._a:
                m = (len(all_children) + 1) // 2
                new_left = AbInternal(self.layer, all_keys[: m - 1], all_children[:m], tagged=False)
                new_right = AbInternal(self.layer, all_keys[m:], all_children[m:], tagged=False)
                new_sep = all_keys[m - 1]
                replacement = self._parent_after_share(parent, li, ri, new_left, new_right, new_sep,
                                                       snap_p if template else self._children(mem, parent))
            else:
                merged = AbInternal(self.layer, all_keys, all_children, tagged=False)
                replacement = self._parent_after_join(parent, li, ri, merged,
                                                      snap_p if template else self._children(mem, parent))
        return self._finish_step(pid, mem, template, gp, gidx, (parent, node, sibling), replacement)

    def _parent_after_share(self, parent, li, ri, new_left, new_right, new_sep, p_children):
        keys = list(parent.keys)
        keys[li] = new_sep
        children = list(p_children)
        children[li] = new_left
        children[ri] = new_right
        return AbInternal(self.layer, keys, children, tagged=False)

    def _parent_after_join(self, parent, li, ri, merged, p_children):
        keys = list(parent.keys)
        del keys[li]
        children = list(p_children)
        children[li] = merged
        del children[ri]
        return AbInternal(self.layer, keys, children, tagged=False)

    def _finish_step(self, pid, mem, template, gp, gidx, removed, replacement):
        if template:
            records = (gp,) + removed
            if not self._scx(pid, mem, records, removed, (gp, gidx), replacement):
                return RESTART
        else:
            mem.write(gp.links[gidx], replacement)
            if self.config.search_outside_txn:
                for rec in removed:
                    mem.write(rec.marked, True)
        return removed

    # -- quiescent traversals --------------------------------------------------------

    def items(self) -> Iterator[tuple[int, int]]:
        def walk(node):
            if isinstance(node, AbLeaf):
                cnt = node.count.load()
                for i in range(cnt):
                    yield (node.key_words[i].load(), node.val_words[i].load())
                return
            for w in node.links:
                yield from walk(w.load())

        yield from walk(self._entry.links[0].load())

    def drain_rebalance(self) -> None:
        pid = self._pid()
        while True:
            hint = self._find_violation_hint()
            if hint is None:
                return
            self.domain.guard_enter(pid)
            try:
                h = hint
                while h is not None:
                    step = self.runner.execute(pid, self._rebalance_op(pid, h))
                    for record in step.retire:
                        self.domain.retire(pid, record)
                    h = step.hint
            finally:
                self.domain.guard_exit(pid)

    def _find_violation_hint(self) -> int | None:
        a = self._a

        def walk(node, low_key, is_root):
            if isinstance(node, AbLeaf):
                if not is_root and node.count.load() < a:
                    return low_key
                return None
            if node.tagged or (not is_root and len(node.links) < a) or (is_root and len(node.links) == 1):
                return low_key
            for i, w in enumerate(node.links):
                bound = low_key if i == 0 else node.keys[i - 1]
                found = walk(w.load(), bound, False)
                if found is not None:
                    return found
            return None

        return walk(self._entry.links[0].load(), -(1 << 62), True)

    def structural_violations(self) -> list[str]:
        a, b = self._a, self._b
        problems: list[str] = []
        leaf_depths: set[int] = set()
        prev_key: list[int | None] = [None]

        def walk(node, lo, hi, depth, is_root):
            if node.marked.load():
                problems.append(f"reachable node #{node.uid} is marked")
            if isinstance(node, AbLeaf):
                leaf_depths.add(depth)
                cnt = node.count.load()
                if not is_root and not a <= cnt <= b:
                    problems.append(f"leaf #{node.uid} degree {cnt} outside [{a}, {b}]")
                if cnt > b:
                    problems.append(f"leaf #{node.uid} over capacity")
                for i in range(cnt):
                    k = node.key_words[i].load()
                    if not (lo <= k < hi):
                        problems.append(f"leaf #{node.uid} key {k} outside [{lo}, {hi})")
                    if prev_key[0] is not None and not prev_key[0] < k:
                        problems.append(f"leaf keys out of order: {prev_key[0]} !< {k}")
                    prev_key[0] = k
                return
            if not isinstance(node, AbInternal):
                problems.append(f"unexpected object {node!r} linked in the tree")
                return
            deg = len(node.links)
            if node.tagged:
                problems.append(f"internal #{node.uid} still tagged")
            if is_root:
                if deg < 2:
                    problems.append(f"internal root #{node.uid} has degree {deg}")
            elif not a <= deg <= b:
                problems.append(f"internal #{node.uid} degree {deg} outside [{a}, {b}]")
            keys = node.keys
            for x, y in zip(keys, keys[1:]):
                if not x < y:
                    problems.append(f"internal #{node.uid} keys out of order")
            for k in keys:
                if not (lo <= k < hi):
                    problems.append(f"internal #{node.uid} separator {k} outside [{lo}, {hi})")
            for i, w in enumerate(node.links):
                child_lo = keys[i - 1] if i > 0 else lo
                child_hi = keys[i] if i < len(keys) else hi
                walk(w.load(), child_lo, child_hi, depth + 1, False)

        walk(self._entry.links[0].load(), float("-inf"), float("inf"), 0, True)
        if len(leaf_depths) > 1:
            problems.append(f"leaves at differing depths: {sorted(leaf_depths)}")
        return problems
