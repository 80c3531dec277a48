"""
Simulated serverless topology with retained state
=================================================

One coordinator fans a query batch out to allocator functions arranged
as a tree; leaves hand partition work to processor functions. Containers
persist between runs, and each keeps the objects it fetched, so a warm
second run touches object storage zero times.
"""

import tempfile

import numpy as np

from segann import BuildParams, IndexBundle, RunOptions, SimulatedRuntime, build_index
from segann.runtime import TreeConfig, children_of, total_allocators
from segann.synthetic import benchmark_workload

# fan-out math first: how many allocators a (branching, levels) tree holds
for branching, levels in [(10, 1), (4, 2), (4, 3), (6, 3)]:
    cfg = TreeConfig(branching, levels)
    print("tree branching=%d levels=%d -> %3d allocators"
          % (branching, levels, total_allocators(cfg)))

# ids are laid out so each child owns a contiguous block; the coordinator
# is node -1 and fans to the subtree roots
cfg = TreeConfig(4, 3)
print("(4,3) coordinator fans to:", [c for c, _ in children_of(cfg, -1, 0)])
print("(4,3) node 0 fans to:     ", [c for c, _ in children_of(cfg, 0, 1)])

# now run actual queries through the simulation
dataset, attrs, queries = benchmark_workload(
    n=8000, dim=16, a_count=2, n_queries=24, k=5, seed=3, joint_selectivity=0.2,
)
workdir = tempfile.mkdtemp(prefix="segann-demo-")
manifest = build_index(dataset, attrs, BuildParams(partitions=6, seed=0), workdir)
bundle = IndexBundle.load(manifest)

# sequential execution keeps the container pool deterministic; with
# threads, overlapping acquires can spawn extra containers
options = RunOptions(branching=4, levels=2, max_workers=1)
runtime = SimulatedRuntime(bundle, options)

results1, report1 = runtime.run_batch(queries)
print("cold run: %d allocators, %d processor calls, %d object gets, %d cold starts"
      % (report1.n_allocators, report1.n_processor_invocations,
         report1.object_gets, report1.cold_starts))

results2, report2 = runtime.run_batch(queries)
print("warm run: %d object gets, %d cold starts, %d warm starts"
      % (report2.object_gets, report2.cold_starts, report2.warm_starts))
assert report2.object_gets == 0

# answers are identical run to run and identical to a flat topology
flat = SimulatedRuntime(bundle, RunOptions(single_allocator=True, max_workers=1))
results3, _ = flat.run_batch(queries)
same = all(
    np.array_equal(a.ids, b.ids) and np.array_equal(a.ids, c.ids)
    for a, b, c in zip(results1, results2, results3)
)
print("tree/warm/flat runs agree on every query:", same)

# an optional result cache absorbs repeated queries entirely
cached = SimulatedRuntime(bundle, RunOptions(single_allocator=True, result_cache=True))
cached.run_batch(queries)
_, rep = cached.run_batch(queries)
print("repeat with result cache: %d hits, %d processor calls"
      % (rep.cache_hits, rep.n_processor_invocations))
