import json

import numpy as np
import pytest

from segann.costmodel import CostReport, PriceSheet, UsageReport, price_run
from segann.errors import ConfigError


SHEET = PriceSheet(invocation=2e-7, mb_second=1e-8, object_get=4e-7, byte_read=3e-11)


def usage(**overrides):
    base = dict(
        allocators=10,
        processors=25,
        coordinator_seconds=0.5,
        allocator_seconds=(0.1,) * 10,
        processor_seconds=(0.02,) * 25,
        coordinator_mb=512.0,
        allocator_mb=1770.0,
        processor_mb=1770.0,
        object_gets=45,
        record_reads=2000,
        record_bytes=256,
    )
    base.update(overrides)
    return UsageReport(**base)


class TestPricing:
    def test_frozen_hand_computed_run(self):
        report = price_run(usage(), SHEET)
        # 36 invocations at 2e-7
        assert report.invocation_cost == pytest.approx(7.2e-6, rel=1e-12)
        # (1770*1.0 + 1770*0.5 + 512*0.5) * 1e-8
        assert report.runtime_cost == pytest.approx(2.911e-5, rel=1e-12)
        assert report.object_get_cost == pytest.approx(1.8e-5, rel=1e-12)
        # 2000 reads * 256 bytes * 3e-11
        assert report.record_read_cost == pytest.approx(1.536e-5, rel=1e-12)
        assert report.total_cost == pytest.approx(6.967e-5, rel=1e-12)

    def test_decomposition_identities(self):
        report = price_run(usage(), SHEET)
        assert report.compute_cost == report.invocation_cost + report.runtime_cost
        assert report.total_cost == (
            report.compute_cost + report.object_get_cost + report.record_read_cost
        )

    def test_randomized_against_straight_arithmetic(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            u = usage(
                allocators=int(rng.integers(0, 400)),
                processors=int(rng.integers(0, 4000)),
                coordinator_seconds=float(rng.uniform(0, 100)),
                allocator_seconds=tuple(rng.uniform(0, 5, rng.integers(0, 20))),
                processor_seconds=tuple(rng.uniform(0, 5, rng.integers(0, 20))),
                coordinator_mb=float(rng.uniform(128, 4096)),
                allocator_mb=float(rng.uniform(128, 4096)),
                processor_mb=float(rng.uniform(128, 4096)),
                object_gets=int(rng.integers(0, 10**6)),
                record_reads=int(rng.integers(0, 10**7)),
                record_bytes=int(rng.integers(1, 4096)),
            )
            p = PriceSheet(*rng.uniform(1e-12, 1e-5, 4))
            r = price_run(u, p)
            want_inv = (u.allocators + u.processors + 1) * p.invocation
            want_rt = (
                u.allocator_mb * sum(u.allocator_seconds)
                + u.processor_mb * sum(u.processor_seconds)
                + u.coordinator_mb * u.coordinator_seconds
            ) * p.mb_second
            want_total = (
                want_inv
                + want_rt
                + u.object_gets * p.object_get
                + u.record_reads * u.record_bytes * p.byte_read
            )
            assert r.invocation_cost == pytest.approx(want_inv, rel=1e-12)
            assert r.runtime_cost == pytest.approx(want_rt, rel=1e-12)
            assert r.total_cost == pytest.approx(want_total, rel=1e-12)

    def test_idle_run_costs_one_invocation(self):
        u = usage(
            allocators=0,
            processors=0,
            coordinator_seconds=0.0,
            allocator_seconds=(),
            processor_seconds=(),
            object_gets=0,
            record_reads=0,
        )
        r = price_run(u, SHEET)
        assert r.total_cost == pytest.approx(SHEET.invocation, rel=1e-12)

    def test_negative_counts_rejected(self):
        with pytest.raises(ConfigError):
            price_run(usage(allocators=-1), SHEET)

    def test_as_dict_lists_every_component(self):
        r = price_run(usage(), SHEET)
        d = r.as_dict()
        assert set(d) == {
            "invocation_cost",
            "runtime_cost",
            "compute_cost",
            "object_get_cost",
            "record_read_cost",
            "total_cost",
        }
        assert d["total_cost"] == r.total_cost


class TestPriceSheet:
    def test_load_from_json(self, tmp_path):
        path = tmp_path / "prices.json"
        path.write_text(
            json.dumps(
                {
                    "invocation": 2e-7,
                    "mb_second": 1e-8,
                    "object_get": 4e-7,
                    "byte_read": 3e-11,
                    "_comment": "ignored",
                }
            )
        )
        sheet = PriceSheet.from_json(str(path))
        assert sheet == SHEET

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "prices.json"
        path.write_text(json.dumps({"invocation": 1e-7}))
        with pytest.raises(ConfigError):
            PriceSheet.from_json(str(path))

    def test_bundled_sample_sheet_loads(self):
        import segann

        from importlib import resources

        with resources.as_file(
            resources.files("segann").joinpath("data/sample_prices.json")
        ) as p:
            sheet = PriceSheet.from_json(str(p))
        assert sheet.invocation > 0
        assert sheet.mb_second > 0
        assert sheet.object_get > 0
        assert sheet.byte_read > 0
