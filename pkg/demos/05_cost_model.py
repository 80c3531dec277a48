"""
Pricing a deployment from run telemetry
=======================================

Every simulated run produces a usage report: invocation counts, billed
durations per function tier, object-store fetches, record reads. A price
sheet turns that into dollars, split into the components that actually
move when the topology changes.
"""

import tempfile
from importlib.resources import files

from segann import (
    BuildParams,
    IndexBundle,
    PriceSheet,
    RunOptions,
    SimulatedRuntime,
    build_index,
    price_run,
)
from segann.synthetic import benchmark_workload

prices = PriceSheet.from_json(str(files("segann") / "data/sample_prices.json"))
print("price sheet: $%.2e per invocation, $%.2e per MB-second"
      % (prices.invocation, prices.mb_second))

dataset, attrs, queries = benchmark_workload(
    n=8000, dim=16, a_count=2, n_queries=24, k=5, seed=3, joint_selectivity=0.2,
)
workdir = tempfile.mkdtemp(prefix="segann-demo-")
manifest = build_index(dataset, attrs, BuildParams(partitions=6, seed=0), workdir)
bundle = IndexBundle.load(manifest)

# same work, three fan-out shapes: wider trees buy latency with invocations
shapes = [
    ("flat, one allocator", RunOptions(single_allocator=True, max_workers=1)),
    ("tree 6x1", RunOptions(branching=6, levels=1, max_workers=1)),
    ("tree 4x2", RunOptions(branching=4, levels=2, max_workers=1)),
]
print()
print("%-20s %12s %12s %12s %12s" % ("topology", "invocation", "storage", "reads", "total"))
for name, options in shapes:
    runtime = SimulatedRuntime(bundle, options)
    _, report = runtime.run_batch(queries)
    cost = price_run(report.usage(options), prices)
    print("%-20s %12.3e %12.3e %12.3e %12.3e"
          % (name, cost.invocation_cost, cost.object_get_cost,
             cost.record_read_cost, cost.total_cost))

# warm containers keep their fetched state, so a second run drops the
# object-store component to zero
runtime = SimulatedRuntime(bundle, shapes[0][1])
runtime.run_batch(queries)
_, warm_report = runtime.run_batch(queries)
warm_cost = price_run(warm_report.usage(shapes[0][1]), prices)
print()
print("warm rerun, flat topology: storage $%.3e, total $%.3e"
      % (warm_cost.object_get_cost, warm_cost.total_cost))

# the decomposition always reconciles
d = warm_cost.as_dict()
assert abs(d["total_cost"]
           - (d["compute_cost"] + d["object_get_cost"] + d["record_read_cost"])) < 1e-18
print("total == compute + storage gets + record reads: ok")
