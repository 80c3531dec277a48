import numpy as np
import pytest

from segann.builder import BuildParams, IndexBundle, build_index
from segann.synthetic import benchmark_workload


@pytest.fixture(scope="session")
def small_instance(tmp_path_factory):
    """A 3k-row index shared by tests that only need a working bundle."""
    dataset, attrs, queries = benchmark_workload(
        n=3000, dim=16, a_count=3, n_queries=24, k=5, seed=7
    )
    out = tmp_path_factory.mktemp("small_index")
    manifest = build_index(
        dataset, attrs, BuildParams(partitions=4, seed=1), str(out)
    )
    return {
        "dataset": dataset,
        "attrs": attrs,
        "queries": queries,
        "manifest": manifest,
        "bundle": IndexBundle.load(manifest),
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
