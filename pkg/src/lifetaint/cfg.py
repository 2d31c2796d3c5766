"""Per-method control-flow graphs: construction, de-looping, block ordering.

Back edges (target dominates source) are removed after dominator analysis;
for each removed edge a replacement edge from the end of the loop body to the
loop's exit successors is added when it does not reintroduce a cycle, so the
merge at the loop exit still sees the body's effects.  The result is a DAG
suitable for a single reverse-post-order pass.
"""

import logging

log = logging.getLogger(__name__)


class BasicBlock:
    def __init__(self, bid, start, end):
        self.id = bid
        self.start = start          # first instruction index
        self.end = end              # one past the last instruction index
        self.successors = []
        self.predecessors = []

    def __repr__(self):
        return "BasicBlock(%d, [%d:%d))" % (self.id, self.start, self.end)


class Cfg:
    def __init__(self, method, blocks, entry=0):
        self.method = method
        self.blocks = blocks
        self.entry = entry
        self.idom = {}

    def block(self, bid):
        return self.blocks[bid]

    def edges(self):
        return [(b.id, s) for b in self.blocks for s in b.successors]

    def instructions(self, block):
        return self.method.instructions[block.start:block.end]


def build_cfg(method):
    """Partition instructions into leader-delimited blocks and wire edges."""
    instrs = method.instructions
    n = len(instrs)
    if n == 0:
        cfg = Cfg(method, [BasicBlock(0, 0, 0)])
        return cfg
    leaders = {0}
    for ins in instrs:
        if ins.kind in ("IF_GOTO", "GOTO"):
            leaders.add(method.labels[ins.operands[-1]])
            if ins.index + 1 < n:
                leaders.add(ins.index + 1)
        elif ins.kind in ("RETURN", "RETURN_VOID") and ins.index + 1 < n:
            leaders.add(ins.index + 1)
    for target in method.labels.values():
        if target < n:
            leaders.add(target)
    starts = sorted(leaders)
    blocks = []
    for i, start in enumerate(starts):
        end = starts[i + 1] if i + 1 < len(starts) else n
        blocks.append(BasicBlock(i, start, end))
    by_start = {b.start: b.id for b in blocks}

    def block_of(instr_index):
        return by_start[instr_index]

    for b in blocks:
        if b.start == b.end:
            continue
        last = instrs[b.end - 1]
        if last.kind == "GOTO":
            succs = [block_of(method.labels[last.operands[0]])]
        elif last.kind == "IF_GOTO":
            succs = []
            if b.end < n:
                succs.append(block_of(b.end))
            target = block_of(method.labels[last.operands[1]])
            if target not in succs:
                succs.append(target)
        elif last.kind in ("RETURN", "RETURN_VOID"):
            succs = []
        else:
            succs = [block_of(b.end)] if b.end < n else []
        b.successors = succs
        for s in succs:
            blocks[s].predecessors.append(b.id)
    return Cfg(method, blocks)


def _reachable(cfg):
    seen = set()
    stack = [cfg.entry]
    while stack:
        b = stack.pop()
        if b in seen:
            continue
        seen.add(b)
        stack.extend(cfg.blocks[b].successors)
    return seen


def compute_dominators(cfg):
    """Iterative dominator sets over reachable blocks: dom[b] = {b} ∪ ∩ dom(preds)."""
    reach = _reachable(cfg)
    dom = {b: set(reach) for b in reach}
    dom[cfg.entry] = {cfg.entry}
    changed = True
    while changed:
        changed = False
        for b in sorted(reach):
            if b == cfg.entry:
                continue
            preds = [p for p in cfg.blocks[b].predecessors if p in reach]
            new = set(reach)
            for p in preds:
                new &= dom[p]
            new |= {b}
            if not preds:
                new = {b}
            if new != dom[b]:
                dom[b] = new
                changed = True
    return dom


def _immediate_dominators(dom, entry):
    idom = {}
    for b, ds in dom.items():
        if b == entry:
            continue
        strict = ds - {b}
        # the immediate dominator is the strict dominator dominated by all others
        for cand in strict:
            if all(cand in dom[o] or o == cand for o in strict):
                idom[b] = cand
    return idom


def _has_cycle(blocks, entry):
    state = {}
    stack = [(entry, iter(blocks[entry].successors))]
    state[entry] = 1
    while stack:
        node, it = stack[-1]
        advanced = False
        for s in it:
            if state.get(s) == 1:
                return True
            if s not in state:
                state[s] = 1
                stack.append((s, iter(blocks[s].successors)))
                advanced = True
                break
        if not advanced:
            state[node] = 2
            stack.pop()
    return False


def _natural_loop(cfg, tail, header):
    body = {header, tail}
    work = [tail]
    while work:
        node = work.pop()
        if node == header:
            continue
        for p in cfg.blocks[node].predecessors:
            if p not in body:
                body.add(p)
                work.append(p)
    return body


def _copy(cfg):
    blocks = [BasicBlock(b.id, b.start, b.end) for b in cfg.blocks]
    for b, nb in zip(cfg.blocks, blocks):
        nb.successors = list(b.successors)
        nb.predecessors = list(b.predecessors)
    return Cfg(cfg.method, blocks, cfg.entry)


def remove_back_edges(cfg):
    """Return a de-looped copy of the CFG.

    Every edge whose target dominates its source is dropped; the source (the
    end of the loop body) instead feeds the loop's exit successors so merges
    past the loop still combine the body's state.  Irreducible graphs fall
    back to DFS edge classification with a warning.
    """
    out = _copy(cfg)
    dom = compute_dominators(out)
    reach = set(dom)
    back = [(b.id, s) for b in out.blocks if b.id in reach
            for s in b.successors if s in dom.get(b.id, ())]

    def drop_edge(u, v):
        out.blocks[u].successors.remove(v)
        out.blocks[v].predecessors.remove(u)

    def add_edge(u, v):
        if v not in out.blocks[u].successors:
            out.blocks[u].successors.append(v)
            out.blocks[v].predecessors.append(u)

    for (tail, header) in back:
        body = _natural_loop(cfg, tail, header)
        drop_edge(tail, header)
        exits = [s for s in out.blocks[header].successors if s not in body]
        for ex in exits:
            add_edge(tail, ex)
            if _has_cycle(out.blocks, out.entry):
                drop_edge(tail, ex)

    if _has_cycle(out.blocks, out.entry):
        log.warning(
            "%s: irreducible control flow, falling back to DFS edge classification",
            cfg.method.full_signature,
        )
        state = {}

        def classify(node):
            state[node] = 1
            for s in list(out.blocks[node].successors):
                if state.get(s) == 1:
                    drop_edge(node, s)
                elif s not in state:
                    classify(s)
            state[node] = 2

        classify(out.entry)

    out.idom = _immediate_dominators(compute_dominators(out), out.entry)
    return out


def reverse_post_order(cfg):
    """Reachable block ids, every block after all of its predecessors."""
    order = []
    seen = set()

    def visit(b):
        seen.add(b)
        for s in cfg.blocks[b].successors:
            if s not in seen:
                visit(s)
        order.append(b)

    visit(cfg.entry)
    rpo = list(reversed(order))
    pos = {b: i for i, b in enumerate(rpo)}
    for b in rpo:
        for s in cfg.blocks[b].successors:
            if s in pos and pos[s] <= pos[b]:
                raise RuntimeError(
                    "reverse_post_order called on a cyclic graph (%s)" % cfg.method.full_signature
                )
    return rpo


def to_dot(cfg):
    """DOT rendering of the CFG for debugging."""
    lines = ["digraph \"%s\" {" % cfg.method.full_signature]
    for b in cfg.blocks:
        ops = "\\l".join(
            "%d: %s" % (i.index, i.kind) for i in cfg.instructions(b)
        )
        lines.append('  b%d [shape=box, label="B%d\\l%s\\l"];' % (b.id, b.id, ops))
    for (u, v) in cfg.edges():
        lines.append("  b%d -> b%d;" % (u, v))
    lines.append("}")
    return "\n".join(lines)
