"""Pricing a run of the simulated serverless deployment.

Total cost decomposes into compute and storage traffic:

  total   = compute + object_gets + record_reads
  compute = invocations + runtime
  invocations = (allocators + processors + 1) * price.invocation
  runtime = (alloc_mb * sum(allocator seconds)
             + proc_mb * sum(processor seconds)
             + coord_mb * coordinator seconds) * price.mb_second
  object_gets  = gets * price.object_get
  record_reads = reads * record_bytes * price.byte_read

Memory sizes are in MB, times in seconds. The price sheet ships as a JSON
file; the bundled sample uses publicly listed on-demand rates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass(frozen=True)
class PriceSheet:
    invocation: float    # currency per function invocation
    mb_second: float     # currency per MB-second of billed runtime
    object_get: float    # currency per object-storage GET
    byte_read: float     # currency per byte served from the record store

    @staticmethod
    def from_json(path: str) -> "PriceSheet":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            return PriceSheet(
                invocation=float(raw["invocation"]),
                mb_second=float(raw["mb_second"]),
                object_get=float(raw["object_get"]),
                byte_read=float(raw["byte_read"]),
            )
        except KeyError as missing:
            raise ConfigError(f"price sheet is missing {missing}") from None


@dataclass(frozen=True)
class UsageReport:
    """Billable facts extracted from one run."""

    allocators: int                 # allocator invocations
    processors: int                 # processor invocations
    coordinator_seconds: float
    allocator_seconds: tuple        # per-invocation durations
    processor_seconds: tuple
    coordinator_mb: float
    allocator_mb: float
    processor_mb: float
    object_gets: int
    record_reads: int
    record_bytes: int               # bytes per record read


@dataclass(frozen=True)
class CostReport:
    invocation_cost: float
    runtime_cost: float
    compute_cost: float
    object_get_cost: float
    record_read_cost: float
    total_cost: float

    def as_dict(self) -> dict:
        return {
            "invocation_cost": self.invocation_cost,
            "runtime_cost": self.runtime_cost,
            "compute_cost": self.compute_cost,
            "object_get_cost": self.object_get_cost,
            "record_read_cost": self.record_read_cost,
            "total_cost": self.total_cost,
        }


def price_run(usage: UsageReport, prices: PriceSheet) -> CostReport:
    if usage.allocators < 0 or usage.processors < 0:
        raise ConfigError("invocation counts cannot be negative")
    invocation_cost = (usage.allocators + usage.processors + 1) * prices.invocation
    runtime_cost = (
        usage.allocator_mb * sum(usage.allocator_seconds)
        + usage.processor_mb * sum(usage.processor_seconds)
        + usage.coordinator_mb * usage.coordinator_seconds
    ) * prices.mb_second
    compute_cost = invocation_cost + runtime_cost
    object_get_cost = usage.object_gets * prices.object_get
    record_read_cost = usage.record_reads * usage.record_bytes * prices.byte_read
    total = compute_cost + object_get_cost + record_read_cost
    return CostReport(
        invocation_cost,
        runtime_cost,
        compute_cost,
        object_get_cost,
        record_read_cost,
        total,
    )
