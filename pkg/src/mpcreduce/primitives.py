"""Constant-round building blocks on a Cluster.

Every primitive moves data only through ``Cluster.exchange`` so that rounds
and per-machine traffic are charged by the engine.  Round counts depend on
the epsilon of the configuration and on a declared polynomial degree
(``k <= N**degree``), never on the data size itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine import Cluster, MalformedProgram, Send, Table


def phases_for(count: int, cl: Cluster, degree: float | None, per_phase_cap: int) -> tuple[int, int]:
    """Pick (phases q, fan-out f) with f**q >= count.

    With a declared degree the phase count is ceil(degree / (1 - eps)),
    which is what makes the round count independent of the input size.
    """
    if count <= 1:
        return 0, 1
    if degree is None:
        q = 1
        while per_phase_cap ** q < count:
            q += 1
    else:
        q = max(1, math.ceil(degree / (1.0 - cl.config.epsilon) - 1e-9))
    f = max(2, math.ceil(count ** (1.0 / q)))
    while f > 2 and (f - 1) ** q >= count:
        f -= 1
    while f ** q < count:
        f += 1
    if f > per_phase_cap:
        raise MalformedProgram(
            f"fan-out {f} exceeds s={cl.s}: {count} items outgrow the declared degree {degree}")
    return q, f


# --------------------------------------------------------------------------
# Replication


@dataclass
class ReplicaSet:
    k: int
    source: range
    places: np.ndarray  # places[c, x]: machine holding copy c of source machine x

    def machines(self, c: int) -> np.ndarray:
        return self.places[c]


def replicate(cl: Cluster, names: Sequence[str], machines: Sequence[int], k: int,
              degree: float | None = None, targets: np.ndarray | None = None,
              into: dict[str, str] | None = None) -> ReplicaSet:
    """Make k - 1 further copies of the layout ``machines`` (copy 0 is the source).

    ``machines`` is any increasing list of machine ids, typically a range.

    Each phase is a two-step broadcast: a machine splits its words among
    helpers holding floor(s/f) words each, and every helper forwards its
    chunk to the f new copies.  Copies land machine-for-machine, either on
    fresh machines or on the rows of ``targets`` (shape (k-1, B)).
    """
    into = into or {}
    src = np.asarray(machines, np.int64)
    if np.any(np.diff(src) <= 0):
        raise MalformedProgram("replicate needs the source machines in increasing order")
    B = len(src)
    if targets is not None:
        targets = np.asarray(targets, np.int64).reshape(k - 1, B)
        places = np.vstack([src[None, :], targets])
    else:
        fresh = cl.provision((k - 1) * B) if k > 1 else range(0)
        places = np.vstack([src[None, :], np.asarray(fresh, np.int64).reshape(max(k - 1, 0), B)])
    rs = ReplicaSet(k, machines, places)
    if k <= 1 or B == 0:
        return rs

    # flatten the layout into words, remembering which table each machine holds
    table_of = np.full(B, -1, np.int64)
    widths = []
    w_mach, w_val = [], []
    for t_index, name in enumerate(names):
        t = cl.get(name, 1)
        t = t.between(int(src[0]), int(src[-1]) + 1)
        t = t.where(np.isin(t.mach, src))
        widths.append(t.width)
        if not len(t):
            continue
        tx = np.searchsorted(src, t.mach)
        xs = np.unique(tx)
        if np.any(table_of[xs] >= 0):
            raise MalformedProgram("replicate needs each machine to hold a single table")
        table_of[xs] = t_index
        w_mach.append(np.repeat(tx, t.width))
        w_val.append(t.data.reshape(-1))
    if not w_mach:
        return rs
    xoff = np.concatenate(w_mach)
    vals = np.concatenate(w_val)
    order = np.argsort(xoff, kind="stable")
    xoff, vals = xoff[order], vals[order]
    starts = np.searchsorted(xoff, xoff, side="left")
    offset = np.arange(len(xoff)) - starts

    s = cl.s
    q, _ = phases_for(k, cl, degree, s + 1)
    have = 1
    for phase in range(1, q + 1):
        # copies after each phase follow k**(phase/q), so every phase of a
        # declared schedule runs even when k is small
        new_total = k if phase == q else max(have, min(k, math.ceil(k ** (phase / q) - 1e-9)))
        if new_total == have:
            if degree is not None:
                cl.barrier()
                cl.barrier()
            continue
        f = -(-(new_total - have) // have)
        if f > s:
            raise MalformedProgram(f"fan-out {f} exceeds s={s}")
        cap = s // f
        H = -(-s // cap)
        # round A: every existing copy scatters its words to helpers
        nc = have
        c_idx = np.repeat(np.arange(nc), len(xoff))
        x_rep = np.tile(xoff, nc)
        o_rep = np.tile(offset, nc)
        v_rep = np.tile(vals, nc)
        helpers = cl.provision(nc * B * H)
        h_id = helpers.start + (c_idx * B + x_rep) * H + o_rep // cap
        cl.exchange([Send("_repA", places[c_idx, x_rep], h_id, v_rep[:, None])])
        # round B: helpers forward chunks to up to f new copies each
        fan = np.arange(f)
        tc = have + c_idx[:, None] * f + fan[None, :]
        ok = tc < new_total
        rows = np.nonzero(ok)
        dst = places[tc[rows], x_rep[rows[0]]]
        src = h_id[rows[0]]
        data = v_rep[rows[0]][:, None]
        cl.exchange([Send("_repB", src, dst, data)], replace={"_repA": None})
        _rebuild(cl, places, table_of, names, widths, into, have, new_total)
        have = new_total
    return rs


def _rebuild(cl: Cluster, places, table_of, names, widths, into, c0, c1):
    """Turn delivered words back into records of the copied tables."""
    words = cl.get("_repB", 1)
    cl.drop("_repB")
    block = places[c0:c1]
    flat = block.reshape(-1)
    src_x = np.tile(np.arange(places.shape[1]), c1 - c0)
    pos = np.searchsorted(flat[np.argsort(flat, kind="stable")], words.mach)
    sorted_x = src_x[np.argsort(flat, kind="stable")]
    x_of_word = sorted_x[pos]
    tab = table_of[x_of_word]
    updates = {}
    for t_index, name in enumerate(names):
        sel = tab == t_index
        if not np.any(sel):
            continue
        w = widths[t_index]
        vals = words.data[sel, 0].reshape(-1, w)
        mach = words.mach[sel][::w]
        target = into.get(name, name)
        old = cl.get(target, w)
        updates[target] = Table.build(np.concatenate([old.mach, mach]), np.vstack([old.data, vals]), w) \
            if len(old) else Table.build(mach, vals, w)
    cl.local(updates)


def broadcast(cl: Cluster, name: str, machine: int, targets: np.ndarray,
              degree: float | None = None, into: str | None = None) -> None:
    """Copy the records of ``name`` on one machine to every machine in ``targets``."""
    targets = np.asarray(targets, np.int64)
    if not len(targets):
        return
    replicate(cl, [name], range(machine, machine + 1), len(targets) + 1, degree,
              targets=targets[:, None], into={name: into or name})


# --------------------------------------------------------------------------
# Aggregation


OPS = {
    "sum": (np.add, 0),
    "min": (np.minimum, np.iinfo(np.int64).max),
    "max": (np.maximum, np.iinfo(np.int64).min),
}


def _fold(keys: np.ndarray, vals: np.ndarray, op: str):
    if not len(keys):
        return keys, vals
    order = np.argsort(keys, kind="stable")
    keys, vals = keys[order], vals[order]
    starts = np.r_[0, np.flatnonzero(np.diff(keys)) + 1]
    return keys[starts], OPS[op][0].reduceat(vals, starts)


@dataclass
class Aggregated:
    table: Table       # records (segment, v_1 .. v_w) on the output machines
    machines: range
    per_machine: int

    def machine_of(self, seg):
        return self.machines.start + np.asarray(seg) // self.per_machine


def aggregate(cl: Cluster, records: Table, ops: Sequence[str], nseg: int, leaves: int,
              into: str, degree: float | None = None, empty: Sequence[int] | None = None) -> Aggregated:
    """Segmented fold over an s-ary (or degree-derived) tree.

    ``records`` hold (segment, leaf, v_1 .. v_w); records sharing a
    (segment, leaf) pair must live on one machine and are folded locally.
    Each value column runs its own scalar tree, so aggregators receive at
    most f <= s words.  After the tree levels, one more round delivers
    (segment, value) pairs to output machines, which assemble one record
    per segment.
    """
    w = len(ops)
    if records.width != 2 + w:
        raise MalformedProgram("aggregate records must be (segment, leaf, values...)")
    empty = list(empty) if empty is not None else [0] * w
    leaves = max(1, leaves)
    seg, leaf = records.col(0), records.col(1)
    if len(seg) and (seg.min() < 0 or seg.max() >= nseg or leaf.min() < 0 or leaf.max() >= leaves):
        raise MalformedProgram("segment or leaf index out of range")
    L, f = phases_for(leaves, cl, degree, cl.s)
    L = max(L, 1)
    per_out = max(1, cl.s // (2 * w))
    out = cl.provision(-(-nseg // per_out))

    # local fold per (segment, leaf); the key also pins the machine
    key = seg * leaves + leaf
    mach = records.mach
    vals = [records.col(2 + j) for j in range(w)]
    if len(key):
        k_u, m_first = _fold(key, mach, "min")
        _, m_last = _fold(key, mach, "max")
        if np.any(m_first != m_last):
            raise MalformedProgram("a (segment, leaf) pair spans several machines")
        vals = [_fold(key, v, ops[j])[1] for j, v in enumerate(vals)]
        key, mach = k_u, m_first
    # per column: (machines, segment, position, value)
    state = [(mach, key // leaves, key % leaves, vals[j]) for j in range(w)]

    span = leaves
    for _ in range(L):
        span = -(-span // f)
        base = cl.provision(w * nseg * span).start
        sends = [Send("_agg", m, base + (j * nseg + sg) * span + pos // f, v[:, None])
                 for j, (m, sg, pos, v) in enumerate(state)]
        cl.exchange(sends)
        got = cl.get("_agg", 1)
        cl.drop("_agg")
        rel = got.mach - base
        j_of = rel // (nseg * span)
        state = []
        for j in range(w):
            sel = j_of == j
            k_j, v_j = _fold(rel[sel], got.data[sel, 0], ops[j])
            state.append((base + k_j, (k_j // span) % nseg, k_j % span, v_j))
    cl.exchange([Send("_aggout", m, out.start + sg // per_out, np.column_stack([sg * w + j, v]))
                 for j, (m, sg, _, v) in enumerate(state)])

    got = cl.get("_aggout", 2)
    cl.drop("_aggout")
    table = np.tile(np.array(empty, np.int64), (nseg, 1))
    if len(got):
        kk = got.col(0)
        for j in range(w):
            sel = kk % w == j
            k_j, v_j = _fold(kk[sel] // w, got.col(1)[sel], ops[j])
            table[k_j, j] = v_j
    segs = np.arange(nseg, dtype=np.int64)
    result = Table.build(out.start + segs // per_out, np.column_stack([segs, table]), 1 + w)
    cl.local({into: result})
    return Aggregated(result, out, per_out)


# --------------------------------------------------------------------------
# Sorting by all-pairs counting


def rank_records(cl: Cluster, name: str, machines: range, key_cols: Sequence[int],
                 into: str, groups: int = 1, degree: float | None = None,
                 keys: np.ndarray | None = None, per_machine: int | None = None) -> range:
    """Rank every record of ``name`` within its group by (keys, slot).

    The machines are split into ``groups`` equal contiguous blocks.  Only
    the keys travel: they are repacked into half-full block machines, every
    block is replicated onto a grid so that machine (I, J) holds blocks I
    and J, each grid machine counts how many block-J keys precede each
    block-I key, the counts are summed per record, and each rank returns to
    the machine owning the record.  ``keys`` overrides the key columns with
    locally computed values.  ``per_machine`` bounds the records per input
    machine (default s // width); owners need two spare words per record.
    Writes ``into`` = (record..., rank) in place of the records.
    """
    lo, hi = machines.start, machines.stop
    t = cl.get(name, 1).between(lo, hi)
    if keys is None:
        keys = t.data[:, list(key_cols)]
    keys = np.asarray(keys, np.int64).reshape(len(t), -1)
    B0 = hi - lo
    if B0 % groups:
        raise MalformedProgram("groups must split the layout evenly")
    Bg = B0 // groups
    s = cl.s
    cap0 = per_machine or max(1, s // t.width)
    slot = t.slot()
    if len(t) and slot.max() >= cap0:
        raise MalformedProgram("more records on a machine than per_machine allows")
    xoff = t.mach - lo
    g = xoff // Bg
    gid = (xoff % Bg) * cap0 + slot
    nk = keys.shape[1]
    wk = nk + 1
    b = max(1, (s // 2) // wk)
    NB = -(-(Bg * cap0) // b)
    span = NB * b

    # repack the keys into blocks of b, a slice of slots per round
    blocks = cl.provision(groups * NB)
    bm = blocks.start + g * NB + gid // b
    payload = np.column_stack([keys, g * span + gid])
    per_round = max(1, s // wk)
    for r in range(-(-cap0 // per_round)):
        sel = slot // per_round == r
        cl.exchange([Send("_sortblk", t.mach[sel], bm[sel], payload[sel])])

    # grid (g, I, J): copy 1 + I of block (g, J) and copy 1 + NB + J of block (g, I);
    # a diagonal cell needs its block once, so the second copy goes to scratch
    grid = cl.provision(groups * NB * NB)
    scratch = cl.provision(groups * NB)
    gg, ii, jj = np.meshgrid(np.arange(groups), np.arange(NB), np.arange(NB), indexing="ij")
    cell = grid.start + (gg * NB + ii) * NB + jj
    second = np.where(ii == jj, scratch.start + gg * NB + ii, cell)
    targets = np.vstack([cell.transpose(1, 0, 2).reshape(NB, groups * NB),
                         second.transpose(2, 0, 1).reshape(NB, groups * NB)])
    replicate(cl, ["_sortblk"], blocks, 2 * NB + 1, degree, targets=targets,
              into={"_sortblk": "_sortgrid"})
    cl.drop("_sortblk")

    gt = cl.get("_sortgrid", wk)
    cl.drop("_sortgrid")
    gt = gt.between(grid.start, grid.stop)
    m_u, k_u = gt.mach, gt.data
    rel = m_u - grid.start
    I, J = (rel // NB) % NB, rel % NB
    blk = (k_u[:, -1] % span) // b
    is_query, is_ref = blk == I, blk == J
    order = np.lexsort(tuple(k_u[:, c] for c in range(nk, -1, -1)) + (m_u,))
    m_s, q_s, r_s = m_u[order], is_query[order], is_ref[order]
    seen = np.cumsum(r_s) - r_s
    first = np.searchsorted(m_s, m_s, side="left")
    count = seen - seen[first]
    seg = k_u[order][q_s, -1]
    # the max column marks the slots that hold a record
    counts = Table.build(m_s[q_s], np.column_stack([seg, J[order][q_s], count[q_s], np.ones(len(seg), np.int64)]))
    aggregate(cl, counts, ["sum", "max"], groups * span, NB, "_sortrank", degree)

    # each rank returns to the owner of its record as (slot, rank)
    out = cl["_sortrank"]
    cl.drop("_sortrank")
    sg = out.col(0)
    g_o, gid_o = sg // span, sg % span
    real = (out.col(2) == 1) & (gid_o < Bg * cap0)
    owner = lo + g_o * Bg + gid_o // cap0
    cl.exchange([Send("_sortret", out.mach[real], owner[real],
                      np.column_stack([gid_o % cap0, out.col(1)])[real])])
    back = cl.get("_sortret", 2)
    cl.drop("_sortret")
    want = t.mach * cap0 + slot
    have = back.mach * cap0 + back.col(0)
    order = np.argsort(have)
    rank = back.col(1)[order[np.searchsorted(have[order], want)]] if len(t) else np.zeros(0, np.int64)
    rest = cl.get(name, t.width)
    rest = rest.where((rest.mach < lo) | (rest.mach >= hi))
    cl.local({name: rest if len(rest) else None,
              into: Table(t.width + 1, t.mach, np.column_stack([t.data, rank]))})
    return machines


def sort(cl: Cluster, name: str, machines: range, key_cols: Sequence[int],
         into: str, degree: float | None = None) -> range:
    """Route records to machines in globally sorted order, s // (width + 1) per machine."""
    t = cl.get(name, 1).between(machines.start, machines.stop)
    width = t.width
    # thin the records out so that owners have room for their ranks
    sparse = max(1, cl.s // (width + 2))
    cap0 = max(1, cl.s // width)
    spread = cl.provision(-(-len(machines) * cap0 // sparse))
    gid = (t.mach - machines.start) * cap0 + t.slot()
    rest = cl.get(name, width)
    rest = rest.where((rest.mach < machines.start) | (rest.mach >= machines.stop))
    cl.exchange([Send("_sortin", t.mach, spread.start + gid // sparse, t.data)],
                replace={name: rest if len(rest) else None})
    rank_records(cl, "_sortin", spread, key_cols, "_sorted", 1, degree, per_machine=sparse)
    t = cl["_sorted"]
    cl.drop("_sorted")
    per = max(1, cl.s // (width + 1))
    out = cl.provision(-(-len(t) // per))
    cl.exchange([Send("_sortdst", t.mach, out.start + t.col(width) // per, t.data)])
    got = cl["_sortdst"]
    order = np.lexsort((got.col(width), got.mach))
    cl.local({"_sortdst": None, into: Table(width, got.mach[order], got.data[order, :width])})
    return out


def random_permutation(cl: Cluster, name: str, machines: range, into: str, groups: int = 1,
                       size: int | None = None, degree: float | None = None,
                       per_machine: int | None = None) -> range:
    """Uniform random rank for every record, independently per group.

    Each record draws two scores from [1, size**3]; ranking by
    (score, second score, slot) equals re-drawing only among colliding
    items, with the slot as a last resort.
    """
    t = cl.get(name, 1).between(machines.start, machines.stop)
    size = size if size is not None else max(1, len(t) // max(groups, 1))
    rng = cl.rng(0x5C0E)
    scores = rng.integers(1, size ** 3 + 1, size=(len(t), 2), dtype=np.int64)
    return rank_records(cl, name, machines, (), into, groups, degree, keys=scores,
                        per_machine=per_machine)


# --------------------------------------------------------------------------
# Lookup join


def lookup(cl: Cluster, vec: Table, size: int, name: str, machines: range,
           key_cols: Sequence[int], into: str, degree: float | None = None) -> range:
    """Attach vec[key] for every key column of every record of ``name``.

    ``vec`` holds (index, value) records for indices [0, size).  Requester
    records are repacked sparsely, each requester machine gets a private
    copy of the vector, and one request plus one response round answers
    every key.  Writes (record..., values...) to ``into`` on fresh machines.
    """
    s = cl.s
    req = cl.get(name, 1).between(machines.start, machines.stop)
    nk = len(key_cols)
    w = req.width
    per = max(1, s // (w + 3 * nk))
    cap0 = max(1, s // w)
    slots = (req.mach - machines.start) * cap0 + req.slot()
    R = -(-(len(machines) * cap0) // per)
    rmach = cl.provision(R)
    h = max(1, s // 4)
    V = max(1, -(-size // h))
    holders = cl.provision(V)
    cl.exchange([Send("_lkreq", req.mach, rmach.start + slots // per, req.data),
                 Send("_lkvec", vec.mach, holders.start + vec.col(0) // h, vec.data)])
    copies = replicate(cl, ["_lkvec"], holders, R + 1, degree)
    recs = cl.get("_lkreq", w)
    keys = recs.data[:, list(key_cols)]
    owner = recs.mach - rmach.start
    # requester r asks copy r + 1
    flat_keys = keys.reshape(-1)
    flat_owner = np.repeat(owner, nk)
    dst = copies.places[flat_owner + 1, flat_keys // h]
    cl.exchange([Send("_lkask", np.repeat(recs.mach, nk), dst, flat_keys[:, None])])
    asked = cl.get("_lkask", 1)
    table = cl["_lkvec"]
    # every holder answers from its own copy of the vector
    mkey = table.mach * (size + 1) + table.col(0)
    order = np.argsort(mkey)
    where = order[np.searchsorted(mkey[order], asked.mach * (size + 1) + asked.col(0))]
    answer = table.col(1)[where]
    copy_of = _copy_index(copies.places, asked.mach)
    back_to = rmach.start + copy_of - 1
    cl.exchange([Send("_lkans", asked.mach, back_to, np.column_stack([asked.col(0), answer]))],
                replace={"_lkask": None})
    got = cl.get("_lkans", 2)
    cl.drop("_lkans", "_lkvec")
    # answers arrive grouped by holder; match each key on the requester
    akey = got.mach * (size + 1) + got.col(0)
    order = np.argsort(akey, kind="stable")
    pos = order[np.searchsorted(akey[order], np.repeat(recs.mach, nk) * (size + 1) + flat_keys)]
    values = got.col(1)[pos].reshape(-1, nk)
    cl.local({"_lkreq": None,
              into: Table(w + nk, recs.mach, np.column_stack([recs.data, values]))})
    return rmach


def _copy_index(places: np.ndarray, mach: np.ndarray) -> np.ndarray:
    flat = places.reshape(-1)
    order = np.argsort(flat, kind="stable")
    pos = np.searchsorted(flat[order], mach)
    return order[pos] // places.shape[1]
