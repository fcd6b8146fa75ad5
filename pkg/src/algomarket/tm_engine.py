"""Enumeration of small 2-symbol Turing machines and their output frequencies.

Machine formalism
-----------------
An ``n``-state machine has one action for every (state, read symbol) pair,
states numbered ``1..n``. An action is either ``(write, move, next_state)``
with ``move`` in ``{L, R}`` or ``(write, HALT)``, which writes and stops
without moving. That gives ``4n + 2`` actions per entry and
``(4n + 2) ** (2n)`` machines.

Index layout: table entries are ordered ``(1,0), (1,1), (2,0), ... (n,1)``
and the first entry is the most significant digit of the mixed-radix index.
Action codes ``a < 4n`` decode as ``next_state = a // 4 + 1``,
``write = (a // 2) % 2``, ``move = "L" if a % 2 == 0 else "R"``;
codes ``4n`` and ``4n + 1`` are halting actions writing 0 and 1.

The output of a halting run is the tape between the leftmost and the
rightmost visited cell, read left to right.
"""
from __future__ import annotations

import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .distributions import (
    TupleDistribution,
    bundle_to_json,
    empty_distribution,
    merge_distributions,
)

log = logging.getLogger(__name__)

# Busy Beaver step maxima S(n); running this long decides halting for every machine.
BUSY_BEAVER_STEPS = {1: 1, 2: 6, 3: 21, 4: 107}
EXHAUSTIVE_GUARD = 3
BATCH_SIZE = 1 << 17


class BudgetError(RuntimeError):
    """Raised when a job would exceed the configured enumeration budget."""


class Action(NamedTuple):
    write: int
    move: str | None  # "L", "R" or None for HALT
    next_state: int | None

    @property
    def halts(self) -> bool:
        return self.move is None

    def __str__(self):
        if self.halts:
            return f"{self.write}H"
        return f"{self.write}{self.move}{self.next_state}"


@dataclass(frozen=True)
class TuringMachineSpec:
    n_states: int
    table: tuple[Action, ...]  # index 2 * (state - 1) + symbol

    def __post_init__(self):
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")
        if len(self.table) != 2 * self.n_states:
            raise ValueError(f"table needs {2 * self.n_states} entries, got {len(self.table)}")
        for act in self.table:
            if act.write not in (0, 1):
                raise ValueError(f"bad write symbol in {act}")
            if act.halts:
                if act.next_state is not None:
                    raise ValueError("halting action cannot name a next state")
            elif act.move not in ("L", "R") or not 1 <= act.next_state <= self.n_states:
                raise ValueError(f"bad action {act}")

    def action(self, state: int, symbol: int) -> Action:
        return self.table[2 * (state - 1) + symbol]

    def __str__(self):
        return " ".join(str(a) for a in self.table)


@dataclass(frozen=True)
class RunResult:
    halted: bool
    steps: int
    output: str


def space_size(n_states: int) -> int:
    return (4 * n_states + 2) ** (2 * n_states)


def decode_action(code: int, n_states: int) -> Action:
    if not 0 <= code < 4 * n_states + 2:
        raise ValueError(f"action code {code} out of range")
    if code >= 4 * n_states:
        return Action(code - 4 * n_states, None, None)
    return Action((code // 2) % 2, "L" if code % 2 == 0 else "R", code // 4 + 1)


def encode_action(action: Action, n_states: int) -> int:
    if action.halts:
        return 4 * n_states + action.write
    return 4 * (action.next_state - 1) + 2 * action.write + (0 if action.move == "L" else 1)


def machine_from_index(idx: int, n_states: int) -> TuringMachineSpec:
    base = 4 * n_states + 2
    if not 0 <= idx < space_size(n_states):
        raise ValueError(f"index {idx} outside machine space of size {space_size(n_states)}")
    digits = []
    for _ in range(2 * n_states):
        idx, d = divmod(idx, base)
        digits.append(d)
    digits.reverse()
    return TuringMachineSpec(n_states, tuple(decode_action(d, n_states) for d in digits))


def index_from_machine(machine: TuringMachineSpec) -> int:
    base = 4 * machine.n_states + 2
    idx = 0
    for act in machine.table:
        idx = idx * base + encode_action(act, machine.n_states)
    return idx


def run_machine(machine: TuringMachineSpec, background: int = 0, step_bound: int = 1000) -> RunResult:
    """Run ``machine`` from state 1 on a tape filled with ``background``."""
    if step_bound < 1:
        raise ValueError("step_bound must be >= 1")
    if background not in (0, 1):
        raise ValueError("background must be 0 or 1")
    tape: dict[int, int] = {}
    pos = lo = hi = 0
    state = 1
    for step in range(1, step_bound + 1):
        act = machine.action(state, tape.get(pos, background))
        tape[pos] = act.write
        if act.halts:
            out = "".join(str(tape.get(i, background)) for i in range(lo, hi + 1))
            return RunResult(True, step, out)
        pos += -1 if act.move == "L" else 1
        state = act.next_state
        lo = min(lo, pos)
        hi = max(hi, pos)
    return RunResult(False, step_bound, "")


# -- vectorised batch simulation --------------------------------------------

def _action_tables(n_states: int):
    codes = np.arange(4 * n_states + 2)
    halt = codes >= 4 * n_states
    write = np.where(halt, codes - 4 * n_states, (codes // 2) % 2).astype(np.uint8)
    move = np.where(halt, 0, np.where(codes % 2 == 0, -1, 1)).astype(np.int64)
    nxt = np.where(halt, 0, codes // 4).astype(np.int64)  # 0-based
    return write, move, nxt, halt


def decode_indices(indices: np.ndarray, n_states: int) -> np.ndarray:
    """Action-code table, shape ``(len(indices), 2 * n_states)``, for many machines."""
    base = 4 * n_states + 2
    rem = np.asarray(indices, dtype=np.int64).copy()
    digits = np.empty((len(rem), 2 * n_states), dtype=np.int64)
    for col in range(2 * n_states - 1, -1, -1):
        digits[:, col] = rem % base
        rem //= base
    return digits


def run_batch(digits: np.ndarray, n_states: int, background: int, step_bound: int):
    """Simulate many machines in lockstep.

    Returns ``(halted, steps, tape, lo, hi)`` where ``tape`` is a
    ``(batch, 2 * step_bound + 1)`` array centred on the start cell and
    ``lo``/``hi`` are the visited extent as column indices into it.
    """
    write, move, nxt, halt = _action_tables(n_states)
    size = len(digits)
    width = 2 * step_bound + 1
    tape = np.full((size, width), background, dtype=np.uint8)
    pos = np.full(size, step_bound, dtype=np.int64)
    lo = pos.copy()
    hi = pos.copy()
    state = np.zeros(size, dtype=np.int64)
    steps = np.full(size, step_bound, dtype=np.int64)
    halted = np.zeros(size, dtype=bool)
    act = np.arange(size)
    for t in range(1, step_bound + 1):
        p = pos[act]
        sym = tape[act, p]
        a = digits[act, 2 * state[act] + sym]
        tape[act, p] = write[a]
        h = halt[a]
        if h.any():
            done = act[h]
            halted[done] = True
            steps[done] = t
            keep = ~h
            act, a, p = act[keep], a[keep], p[keep]
        p = p + move[a]
        pos[act] = p
        state[act] = nxt[a]
        lo[act] = np.minimum(lo[act], p)
        hi[act] = np.maximum(hi[act], p)
        if not len(act):
            break
    return halted, steps, tape, lo, hi


def count_outputs(halted, tape, lo, hi, lengths: Iterable[int]) -> dict[int, dict[str, int]]:
    """Tally halting outputs whose length is one of ``lengths``."""
    extent = hi - lo + 1
    out: dict[int, dict[str, int]] = {}
    for n in lengths:
        sel = np.nonzero(halted & (extent == n))[0]
        if not len(sel):
            out[n] = {}
            continue
        cols = lo[sel][:, None] + np.arange(n)
        bits = tape[sel[:, None], cols].astype(np.int64)
        codes = bits @ (1 << np.arange(n - 1, -1, -1, dtype=np.int64))
        uniq, cnt = np.unique(codes, return_counts=True)
        out[n] = {format(int(c), f"0{n}b"): int(k) for c, k in zip(uniq, cnt)}
    return out


# -- jobs and sharding ------------------------------------------------------

@dataclass(frozen=True)
class EnumerationJob:
    n_states: int
    step_bound: int | None = None
    mode: str = "exhaustive"  # or "sample"
    sample_count: int = 0
    seed: int = 0
    shard_index: int = 0
    shard_total: int = 1
    force: bool = False

    def __post_init__(self):
        if self.step_bound is None:
            if self.n_states not in BUSY_BEAVER_STEPS:
                raise ValueError(f"no default step bound for {self.n_states} states")
            object.__setattr__(self, "step_bound", BUSY_BEAVER_STEPS[self.n_states])
        if self.step_bound < 1:
            raise ValueError("step_bound must be >= 1")
        if self.mode not in ("exhaustive", "sample"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "sample" and self.sample_count < 1:
            raise ValueError("sample mode needs a positive sample count")
        if self.shard_total < 1 or not 0 <= self.shard_index < self.shard_total:
            raise ValueError(
                f"shard index {self.shard_index} invalid for {self.shard_total} shard(s)"
            )

    @property
    def label(self) -> str:
        text = f"tm:states={self.n_states},bound={self.step_bound},mode={self.mode}"
        if self.mode == "sample":
            text += f",count={self.sample_count},seed={self.seed}"
        return text

    def metadata(self) -> dict:
        d = asdict(self)
        d.pop("force")
        return d

    def shard(self, index: int, total: int) -> "EnumerationJob":
        return replace(self, shard_index=index, shard_total=total)

    def check_budget(self):
        if self.mode == "exhaustive" and self.n_states > EXHAUSTIVE_GUARD and not self.force:
            raise BudgetError(
                f"exhaustive enumeration of {space_size(self.n_states):,} {self.n_states}-state "
                "machines exceeds the desk budget; use sample mode or force"
            )

    def index_batches(self, batch_size: int = BATCH_SIZE):
        """Yield arrays of machine indices covered by this shard."""
        if self.mode == "exhaustive":
            total = space_size(self.n_states)
            start = total * self.shard_index // self.shard_total
            stop = total * (self.shard_index + 1) // self.shard_total
            for s in range(start, stop, batch_size):
                yield np.arange(s, min(s + batch_size, stop), dtype=np.int64)
        else:
            rng = np.random.default_rng(self.seed)
            drawn = rng.integers(0, space_size(self.n_states), size=self.sample_count, dtype=np.int64)
            start = self.sample_count * self.shard_index // self.shard_total
            stop = self.sample_count * (self.shard_index + 1) // self.shard_total
            for s in range(start, stop, batch_size):
                yield drawn[s:min(s + batch_size, stop)]


def enumerate_distribution(job: EnumerationJob, tuple_lengths: Sequence[int],
                           batch_size: int = BATCH_SIZE) -> dict[int, TupleDistribution]:
    """Run every machine of the job's shard on both blank backgrounds.

    Each halting run whose output length is a requested tuple length adds
    one to that output's count.
    """
    job.check_budget()
    lengths = sorted(set(int(n) for n in tuple_lengths))
    if not lengths or lengths[0] < 1:
        raise ValueError("tuple lengths must be positive")
    counts: dict[int, dict[str, int]] = {n: {} for n in lengths}
    for indices in job.index_batches(batch_size):
        digits = decode_indices(indices, job.n_states)
        for background in (0, 1):
            halted, _, tape, lo, hi = run_batch(digits, job.n_states, background, job.step_bound)
            for n, part in count_outputs(halted, tape, lo, hi, lengths).items():
                bucket = counts[n]
                for k, c in part.items():
                    bucket[k] = bucket.get(k, 0) + c
    label = job.label
    return {n: TupleDistribution(n, counts[n], label) for n in lengths}


def merge_shards(parts: Sequence[TupleDistribution]) -> TupleDistribution:
    return merge_distributions(parts)


def merge_shard_bundles(bundles: Sequence[dict[int, TupleDistribution]]) -> dict[int, TupleDistribution]:
    lengths = sorted({n for b in bundles for n in b})
    return {n: merge_shards([b[n] for b in bundles if n in b]) for n in lengths}


def symmetry_violations(dist: TupleDistribution) -> list[str]:
    """Outputs whose count differs from that of their complement or reversal."""
    bad = []
    table = str.maketrans("01", "10")
    for key, c in dist.counts.items():
        if dist.counts.get(key.translate(table), 0) != c or dist.counts.get(key[::-1], 0) != c:
            bad.append(key)
    return bad


# -- checkpointed multi-shard runs ------------------------------------------

def shard_path(checkpoint_dir, index: int, total: int) -> Path:
    return Path(checkpoint_dir) / f"shard-{index:05d}-of-{total:05d}.json"


def _run_shard(job: EnumerationJob, lengths: list[int], path: str) -> str:
    dists = enumerate_distribution(job, lengths)
    meta = {"job": job.metadata(), "tuple_lengths": lengths}
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(bundle_to_json(dists, meta))
    os.replace(tmp, path)
    return path


def _load_checkpoint(path: Path, job: EnumerationJob, lengths: list[int]):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    meta = doc.get("metadata", {})
    if meta.get("job") != job.metadata() or meta.get("tuple_lengths") != lengths:
        return None
    return {d["tuple_length"]: TupleDistribution.from_dict(d) for d in doc["distributions"]}


def run_sharded(job: EnumerationJob, tuple_lengths: Sequence[int], shards: int,
                checkpoint_dir, jobs: int = 1, shard_indices: Sequence[int] | None = None,
                progress=None) -> dict[int, TupleDistribution] | None:
    """Run ``job`` split into ``shards`` pieces with one checkpoint file per shard.

    Shards whose checkpoint already exists with matching metadata are skipped.
    When ``shard_indices`` is given only those shards are run and None is
    returned; otherwise all shards are merged and returned.
    """
    job.check_budget()
    lengths = sorted(set(int(n) for n in tuple_lengths))
    base = job.shard(0, shards)  # validates shards
    Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    wanted = list(range(shards)) if shard_indices is None else list(shard_indices)
    for i in wanted:
        if not 0 <= i < shards:
            raise ValueError(f"shard index {i} invalid for {shards} shard(s)")
    pending = []
    for i in wanted:
        path = shard_path(checkpoint_dir, i, shards)
        sub = base.shard(i, shards)
        if path.exists() and _load_checkpoint(path, sub, lengths) is not None:
            if progress:
                progress(f"shard {i + 1}/{shards} already complete, skipping")
            continue
        pending.append((sub, str(path)))
    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_shard, sub, lengths, p) for sub, p in pending]
            for done, fut in enumerate(futures, 1):
                fut.result()
                if progress:
                    progress(f"shard {done}/{len(pending)} pending shards finished")
    else:
        for done, (sub, p) in enumerate(pending, 1):
            _run_shard(sub, lengths, p)
            if progress:
                progress(f"shard {sub.shard_index + 1}/{shards} finished ({done}/{len(pending)} pending)")
    if shard_indices is not None:
        return None
    bundles = []
    for i in range(shards):
        loaded = _load_checkpoint(shard_path(checkpoint_dir, i, shards), base.shard(i, shards), lengths)
        if loaded is None:
            raise RuntimeError(f"checkpoint for shard {i} is missing or stale")
        bundles.append(loaded)
    merged = merge_shard_bundles(bundles)
    return {n: merged.get(n, empty_distribution(n)).relabel(job.label) for n in lengths}


def stderr_progress(msg: str):
    print(msg, file=sys.stderr, flush=True)
