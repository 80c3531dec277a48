"""Local simulation of the serverless deployment.

Topology: one coordinator fans out to a fixed tree of query allocators
(branching factor F, depth L, so F + F^2 + ... + F^L allocators in total),
and every allocator invokes one query processor per partition its queries
visit. Allocator ids are 0..N-1 in depth-first order; the coordinator is
id -1 at level 0. A node's subtree occupies a contiguous id range, which
makes request routing a range lookup.

Containers: invocations run in pooled containers keyed by function
identity ("co", "qa", or "qp-<partition>"). A container retains the last
payload it loaded; re-invoking it with the same payload version performs
zero storage fetches (a warm start). Everything between components travels
as JSON envelopes with base64-encoded arrays:

  allocator request:  {"kind": "allocator_request", "node": id,
                       "level": l, "chunks": {allocator id: [query, ...]}}
  query:              {"id": i, "vector": <array>, "k": k,
                       "predicate": {attr: [op, operand, ...]}}
  processor request:  {"kind": "processor_request", "partition": p,
                       "queries": [query, ...], "rows": partition size,
                       "candidates": [<packed bitmap>, ...]}
  responses:          {"kind": ..., "results": [{"id", "ids", "distances"},
                       ...], "metrics": {...}, "children": [...]}

Execution is threaded by default; with max_workers=1 every invocation runs
inline in call order, which makes container reuse (and therefore warm/cold
accounting) exactly reproducible. Result values never depend on the
schedule: each query is planned by exactly one allocator and merged under
a total (distance, id) order.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .builder import IndexBundle, PartitionSearcher, SearchParams
from .costmodel import UsageReport
from .dataset import HybridQuery, QueryPredicate, ResultSet
from .errors import ConfigError, ContractViolation
from .hybridfilter import build_lookup, filter_masks
from .search import merge_results, rebalance_plan, select_partitions
from .storage import decode_array, encode_array, read_partition


# ---------------------------------------------------------------------------
# Invocation tree geometry


@dataclass(frozen=True)
class TreeConfig:
    branching: int
    levels: int

    def __post_init__(self):
        if self.branching < 2:
            raise ConfigError("branching factor must be at least 2")
        if self.levels < 1:
            raise ConfigError("need at least one allocator level")


def total_allocators(cfg: TreeConfig) -> int:
    return sum(cfg.branching**i for i in range(1, cfg.levels + 1))


def subtree_size(cfg: TreeConfig, level: int) -> int:
    """Allocators in the subtree rooted at a node of the given level
    (counting the node itself; the coordinator is level 0)."""
    if level == 0:
        return total_allocators(cfg)
    size = math.ceil(total_allocators(cfg) / cfg.branching)
    for _ in range(level - 1):
        size = math.ceil((size - 1) / cfg.branching)
    return size


def children_of(cfg: TreeConfig, node: int, level: int) -> list:
    """(child id, child subtree id range) pairs; empty for leaf allocators."""
    if level >= cfg.levels:
        return []
    stride = subtree_size(cfg, level + 1)
    first = 0 if node == -1 else node + 1
    out = []
    for i in range(cfg.branching):
        start = first + i * stride
        out.append((start, (start, start + stride)))
    return out


def walk_tree(cfg: TreeConfig):
    """Yield (id, level) for every allocator, depth-first."""
    stack = [(c, 1) for c, _ in reversed(children_of(cfg, -1, 0))]
    while stack:
        node, level = stack.pop()
        yield node, level
        stack.extend(
            reversed([(c, level + 1) for c, _ in children_of(cfg, node, level)])
        )


# ---------------------------------------------------------------------------
# Containers and retained payloads


@dataclass
class Container:
    identity: str
    serial: int
    retained_version: Optional[str] = None
    retained: object = None
    invocations: int = 0


class ContainerPool:
    """Warm container reuse with an atomic acquire-or-create policy."""

    def __init__(self):
        self._lock = threading.Lock()
        self._free: dict = {}
        self.created = 0
        self.acquired_warm = 0
        self.acquired_cold = 0

    def acquire(self, identity: str) -> tuple:
        """Returns (container, created). Pops a free container of the same
        identity when one exists, else creates; atomic either way."""
        with self._lock:
            free = self._free.setdefault(identity, [])
            if free:
                self.acquired_warm += 1
                return free.pop(), False
            self.created += 1
            self.acquired_cold += 1
            return Container(identity, self.created), True

    def release(self, container: Container) -> None:
        with self._lock:
            self._free.setdefault(container.identity, []).append(container)

    def discard(self, container: Container) -> None:
        """Failed containers die instead of rejoining the pool."""

    def idle_count(self, identity: str) -> int:
        with self._lock:
            return len(self._free.get(identity, []))


def dre_fetch(
    container: Container, identity: str, version: str, loader: Callable
) -> tuple:
    """Fetch-or-reuse a retained payload.

    loader() must return (payload, storage_gets). Returns (payload, gets)
    where gets is 0 on a warm hit. A container can only serve its own
    function identity; anything else is a wiring bug, not a cache miss.
    """
    if container.identity != identity:
        raise ContractViolation(
            f"container {container.identity!r} asked to serve {identity!r}"
        )
    if container.retained_version == version and container.retained is not None:
        return container.retained, 0
    payload, gets = loader()
    container.retained = payload
    container.retained_version = version
    return payload, gets


# ---------------------------------------------------------------------------
# Payload encoding


def _enc(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": encode_array(obj)}
    if isinstance(obj, bytes):
        return {"__bytes__": base64.b64encode(obj).decode("ascii")}
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _enc(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_enc(v) for v in obj]
    return obj


def _dec(obj):
    if isinstance(obj, dict):
        if "__array__" in obj and len(obj) == 1:
            return decode_array(obj["__array__"])
        if "__bytes__" in obj and len(obj) == 1:
            return base64.b64decode(obj["__bytes__"])
        return {k: _dec(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_dec(v) for v in obj]
    return obj


def encode_payload(obj: dict) -> bytes:
    return json.dumps(_enc(obj), sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_payload(data: bytes) -> dict:
    return _dec(json.loads(data.decode("utf-8")))


# ---------------------------------------------------------------------------
# Interleaved batch scheduling


def interleave_schedule(
    n_batches: int,
    prepare: Callable,
    invoke: Callable,
    reduce: Callable,
    threaded: bool = True,
) -> list:
    """Overlap invoke(i) with prepare(i+1); reduce runs in batch order.

    Returns a trace of (phase, batch, start, end) tuples. Results flow
    through the callbacks, so threaded and inline execution produce
    identical outputs by construction.
    """
    trace = []

    def timed(phase, i, fn, *args):
        t0 = time.perf_counter()
        out = fn(*args)
        trace.append((phase, i, t0, time.perf_counter()))
        return out

    if n_batches <= 0:
        return trace
    prepared = timed("prepare", 0, prepare, 0)
    for i in range(n_batches):
        if threaded:
            holder = {}

            def run(p=prepared, h=holder, i=i):
                h["out"] = timed("invoke", i, invoke, p)

            worker = threading.Thread(target=run)
            worker.start()
            if i + 1 < n_batches:
                prepared = timed("prepare", i + 1, prepare, i + 1)
            worker.join()
            invoked = holder["out"]
        else:
            invoked = timed("invoke", i, invoke, prepared)
            if i + 1 < n_batches:
                prepared = timed("prepare", i + 1, prepare, i + 1)
        timed("reduce", i, reduce, i, invoked)
    return trace


# ---------------------------------------------------------------------------
# The simulated deployment


@dataclass
class RunOptions:
    branching: int = 4
    levels: int = 1
    single_allocator: bool = False
    batch_size: int = 0            # 0: each allocator handles its chunk in one batch
    max_workers: int = 8           # 1 runs every invocation inline, in call order
    cold_start_penalty: float = 0.0
    result_cache: bool = False
    retries: int = 1
    coordinator_mb: float = 512.0
    allocator_mb: float = 1770.0
    processor_mb: float = 1770.0
    fault_hook: Optional[Callable] = None

    def tree(self) -> TreeConfig:
        return TreeConfig(self.branching, self.levels)


@dataclass
class RunReport:
    n_queries: int = 0
    n_allocators: int = 0
    n_processor_invocations: int = 0
    coordinator_seconds: float = 0.0
    allocator_seconds: list = field(default_factory=list)
    processor_seconds: list = field(default_factory=list)
    object_gets: int = 0
    store_reads: int = 0
    store_bytes: int = 0
    record_bytes: int = 0
    warm_starts: int = 0
    cold_starts: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    request_bytes: int = 0
    response_bytes: int = 0
    errors: list = field(default_factory=list)
    partial: bool = False

    def usage(self, options: "RunOptions") -> UsageReport:
        return UsageReport(
            allocators=self.n_allocators,
            processors=self.n_processor_invocations,
            coordinator_seconds=self.coordinator_seconds,
            allocator_seconds=tuple(self.allocator_seconds),
            processor_seconds=tuple(self.processor_seconds),
            coordinator_mb=options.coordinator_mb,
            allocator_mb=options.allocator_mb,
            processor_mb=options.processor_mb,
            object_gets=self.object_gets,
            record_reads=self.store_reads,
            record_bytes=self.record_bytes,
        )


def _query_to_wire(i: int, q: HybridQuery) -> dict:
    return {
        "id": int(i),
        "vector": np.asarray(q.vector, dtype=np.float64),
        "k": int(q.k),
        "predicate": q.predicate.to_dict(),
    }


def _query_from_wire(d: dict) -> tuple:
    return (
        int(d["id"]),
        HybridQuery(d["vector"], QueryPredicate.from_dict(d["predicate"]), int(d["k"])),
    )


class SimulatedRuntime:
    """Drives query batches through the simulated topology.

    Keep one instance per deployment: its container pool models warm state
    across successive run_batch calls.
    """

    def __init__(
        self,
        bundle: IndexBundle,
        options: RunOptions,
        search: Optional[SearchParams] = None,
        pool: Optional[ContainerPool] = None,
    ):
        if not options.single_allocator:
            options.tree()  # validate eagerly
        self.bundle = bundle
        self.options = options
        self.search = search or SearchParams()
        self.pool = pool or ContainerPool()
        self._cache: dict = {}
        self._cache_lock = threading.Lock()

    # -- result cache -----------------------------------------------------

    def _cache_key(self, q: HybridQuery) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(q.vector, dtype=np.float64).tobytes())
        h.update(q.predicate.canonical().encode("utf-8"))
        h.update(str(q.k).encode("ascii"))
        return h.hexdigest()

    # -- invocation plumbing ------------------------------------------------

    def _maybe_fault(self, identity: str, attempt: int) -> None:
        hook = self.options.fault_hook
        if hook is not None and hook(identity, attempt):
            raise RuntimeError(f"injected fault in {identity}")

    def _invoke(self, identity: str, fn: Callable, request: bytes) -> tuple:
        """Run fn(container, request) in a pooled container; one retry."""
        last_error = None
        for attempt in range(self.options.retries + 1):
            container, created = self.pool.acquire(identity)
            t0 = time.perf_counter()
            try:
                self._maybe_fault(identity, attempt)
                container.invocations += 1
                response = fn(container, request)
            except Exception as exc:  # noqa: BLE001 - retried, then surfaced
                self.pool.discard(container)
                last_error = exc
                continue
            duration = time.perf_counter() - t0
            if created:
                duration += self.options.cold_start_penalty
            self.pool.release(container)
            return response, duration, created
        raise last_error

    def _start(self, calls: Sequence[Callable]) -> Callable:
        """Begin the calls; returns a join() producing their results.

        Inline mode (max_workers=1) runs everything now, in order.
        Otherwise each call gets its own thread.
        """
        if self.options.max_workers <= 1 or len(calls) <= 1:
            results = [c() for c in calls]
            return lambda: results
        slots = [None] * len(calls)
        errors = [None] * len(calls)

        def run(i):
            try:
                slots[i] = calls[i]()
            except BaseException as exc:  # noqa: BLE001 - re-raised on join
                errors[i] = exc

        threads = [threading.Thread(target=run, args=(i,)) for i in range(len(calls))]
        for t in threads:
            t.start()

        def join():
            for t in threads:
                t.join()
            for e in errors:
                if e is not None:
                    raise e
            return slots

        return join

    # -- query processor ----------------------------------------------------

    def _processor_loader(self, partition: int) -> Callable:
        def load():
            payload = read_partition(self.bundle.partition_path(partition))
            store = self.bundle.open_store()
            return {"payload": payload, "store": store}, 1

        return load

    def _run_processor(self, container: Container, request: bytes) -> bytes:
        req = decode_payload(request)
        partition = int(req["partition"])
        state, gets = dre_fetch(
            container,
            f"qp-{partition}",
            self.bundle.fingerprint,
            self._processor_loader(partition),
        )
        store = state["store"]
        searcher = PartitionSearcher(state["payload"], store)
        reads0, bytes0 = store.reads, store.bytes_read
        results = []
        n_rows = int(req["rows"])
        for spec, packed in zip(req["queries"], req["candidates"]):
            local = np.unpackbits(packed, count=n_rows).astype(bool)
            res = searcher.search(
                np.asarray(spec["vector"], dtype=np.float64),
                local,
                int(spec["k"]),
                self.search,
            )
            results.append(
                {"id": int(spec["id"]), "ids": res.ids, "distances": res.distances}
            )
        return encode_payload(
            {
                "kind": "processor_response",
                "results": results,
                "metrics": {
                    "gets": gets,
                    "reads": store.reads - reads0,
                    "bytes": store.bytes_read - bytes0,
                },
            }
        )

    # -- query allocator ------------------------------------------------------

    def _allocator_loader(self) -> Callable:
        def load():
            # Shared metadata lives in two storage objects: the manifest
            # (centroids, membership, threshold) and the attribute index.
            bundle = IndexBundle.load(self.bundle.manifest_path)
            bundle.member_lists()
            return {"bundle": bundle}, 2

        return load

    def _plan_and_dispatch(self, bundle: IndexBundle, owned: list) -> tuple:
        """Filter, select partitions, fan out to processors, merge.

        owned is a list of (global query index, HybridQuery). Returns
        (wire results, processor metrics).
        """
        if not owned:
            return [], []
        opts = self.options
        queries = [q for _, q in owned]
        indices = [i for i, _ in owned]
        batch = opts.batch_size if opts.batch_size > 0 else len(queries)
        n_batches = math.ceil(len(queries) / batch)
        members = bundle.member_lists()
        gathered = {}
        metrics = []

        def prepare(bi: int):
            lo = bi * batch
            qs = queries[lo : lo + batch]
            lookup = build_lookup(bundle.attr_index, [q.predicate for q in qs])
            masks = filter_masks(bundle.attr_index, lookup)
            plan = select_partitions(
                np.stack([q.vector for q in qs]),
                masks,
                bundle.centroids,
                members,
                self.search.threshold_override
                if self.search.threshold_override is not None
                else bundle.threshold.factor,
                np.array([q.k for q in qs], dtype=np.int64),
            )
            if self.search.rebalance_target > 0:
                rebalance_plan(plan, masks, members, self.search.rebalance_target)
            requests = []
            for p, visit_list in plan.visits.items():
                if not visit_list:
                    continue
                requests.append(
                    (
                        p,
                        encode_payload(
                            {
                                "kind": "processor_request",
                                "partition": p,
                                "rows": len(members[p]),
                                "queries": [
                                    _query_to_wire(indices[lo + qi], qs[qi])
                                    for qi, _ in visit_list
                                ],
                                "candidates": [
                                    np.packbits(local) for _, local in visit_list
                                ],
                            }
                        ),
                    )
                )
            return requests

        def invoke(requests):
            calls = [
                (lambda p=p, payload=payload: self._invoke(
                    f"qp-{p}", self._run_processor, payload
                ))
                for p, payload in requests
            ]
            return self._start(calls)()

        def reduce(bi: int, responses):
            for response, duration, created in responses:
                resp = decode_payload(response)
                m = dict(resp["metrics"])
                m.update({"duration": duration, "cold": created})
                metrics.append(m)
                for r in resp["results"]:
                    gathered.setdefault(int(r["id"]), []).append(
                        ResultSet(r["ids"], r["distances"])
                    )

        interleave_schedule(
            n_batches, prepare, invoke, reduce, threaded=opts.max_workers > 1
        )
        out = []
        for i, q in owned:
            merged = merge_results(gathered.get(i, []), q.k)
            out.append({"id": i, "ids": merged.ids, "distances": merged.distances})
        return out, metrics

    def _run_allocator(self, container: Container, request: bytes) -> bytes:
        req = decode_payload(request)
        node = int(req["node"])
        level = int(req["level"])
        state, gets = dre_fetch(
            container, "qa", self.bundle.fingerprint, self._allocator_loader()
        )
        bundle = state["bundle"]
        chunks = {int(k): v for k, v in req["chunks"].items()}
        owned = [_query_from_wire(d) for d in chunks.pop(node, [])]

        child_calls = []
        if not self.options.single_allocator:
            for child, (lo, hi) in children_of(self.options.tree(), node, level):
                sub = {
                    str(x): chunk for x, chunk in chunks.items() if lo <= x < hi
                }
                payload = encode_payload(
                    {
                        "kind": "allocator_request",
                        "node": child,
                        "level": level + 1,
                        "chunks": sub,
                    }
                )
                child_calls.append(
                    lambda child=child, payload=payload: self._child_allocator(
                        child, payload
                    )
                )

        join = self._start(child_calls)
        own_results, processor_metrics = self._plan_and_dispatch(bundle, owned)
        child_envelopes = join()
        return encode_payload(
            {
                "kind": "allocator_response",
                "node": node,
                "results": own_results,
                "metrics": {"gets": gets, "processors": processor_metrics},
                "children": child_envelopes,
            }
        )

    def _child_allocator(self, child: int, payload: bytes) -> dict:
        try:
            response, duration, created = self._invoke(
                "qa", self._run_allocator, payload
            )
            return {
                "ok": True,
                "node": child,
                "response": response,
                "duration": duration,
                "cold": created,
            }
        except Exception as exc:  # noqa: BLE001 - surfaced in the run report
            return {"ok": False, "node": child, "error": repr(exc)}

    # -- coordinator ----------------------------------------------------------

    def _collect(self, envelope: dict, report: RunReport, results: dict) -> None:
        resp = decode_payload(envelope["response"])
        report.n_allocators += 1
        report.allocator_seconds.append(float(envelope["duration"]))
        if envelope["cold"]:
            report.cold_starts += 1
        else:
            report.warm_starts += 1
        report.object_gets += int(resp["metrics"]["gets"])
        for m in resp["metrics"]["processors"]:
            report.n_processor_invocations += 1
            report.processor_seconds.append(float(m["duration"]))
            report.object_gets += int(m["gets"])
            report.store_reads += int(m["reads"])
            report.store_bytes += int(m["bytes"])
            if m["cold"]:
                report.cold_starts += 1
            else:
                report.warm_starts += 1
        for r in resp["results"]:
            results[int(r["id"])] = ResultSet(r["ids"], r["distances"])
        for child in resp["children"]:
            if child["ok"]:
                self._collect(child, report, results)
            else:
                report.errors.append({"node": child["node"], "error": child["error"]})
                report.partial = True

    def run_batch(self, queries: Sequence[HybridQuery]) -> tuple:
        """Execute a query batch; returns (list of ResultSet, RunReport)."""
        report = RunReport(n_queries=len(queries), record_bytes=self.bundle.dim * 4)
        co, co_created = self.pool.acquire("co")
        if co_created:
            report.cold_starts += 1
        else:
            report.warm_starts += 1
        co.invocations += 1
        t0 = time.perf_counter()

        final = {}
        pending = []
        for i, q in enumerate(queries):
            if self.options.result_cache:
                with self._cache_lock:
                    hit = self._cache.get(self._cache_key(q))
                if hit is not None:
                    report.cache_hits += 1
                    final[i] = ResultSet(hit.ids.copy(), hit.distances.copy())
                    continue
                report.cache_misses += 1
            pending.append(i)

        if pending:
            if self.options.single_allocator:
                chunk_map = {0: [int(i) for i in pending]}
                roots = [(0, (0, 1))]
            else:
                cfg = self.options.tree()
                parts = np.array_split(
                    np.array(pending, dtype=np.int64), total_allocators(cfg)
                )
                chunk_map = {x: part.tolist() for x, part in enumerate(parts)}
                roots = children_of(cfg, -1, 0)
            calls = []
            for root, (lo, hi) in roots:
                sub = {
                    str(x): [_query_to_wire(i, queries[i]) for i in chunk]
                    for x, chunk in chunk_map.items()
                    if lo <= x < hi
                }
                payload = encode_payload(
                    {"kind": "allocator_request", "node": root, "level": 1, "chunks": sub}
                )
                report.request_bytes += len(payload)
                calls.append(
                    lambda root=root, payload=payload: self._child_allocator(
                        root, payload
                    )
                )
            for outcome in self._start(calls)():
                if outcome["ok"]:
                    report.response_bytes += len(outcome["response"])
                    self._collect(outcome, report, final)
                else:
                    report.errors.append(
                        {"node": outcome["node"], "error": outcome["error"]}
                    )
                    report.partial = True

        if self.options.result_cache:
            with self._cache_lock:
                for i in pending:
                    if i in final:
                        res = final[i]
                        self._cache[self._cache_key(queries[i])] = ResultSet(
                            res.ids.copy(), res.distances.copy()
                        )

        results = []
        missing = ResultSet(np.empty(0, np.int64), np.empty(0, np.float64))
        for i in range(len(queries)):
            res = final.get(i)
            if res is None:
                report.partial = True
                res = missing
            results.append(res)

        report.coordinator_seconds = time.perf_counter() - t0
        if co_created:
            report.coordinator_seconds += self.options.cold_start_penalty
        self.pool.release(co)
        return results, report
