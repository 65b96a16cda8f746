"""
Wall-clock checks for the Monte Carlo benches.

Target: the full block-size table (R = 100, n = 2^14, five block sizes,
five points) finishes in under 30 minutes on one worker, and a single
replication of the debiased estimator stays well below a second.
"""
import time

import pytest

from invdens.schemas.experiment import validate_config
from invdens.services.experiment_service import ExperimentService

pytestmark = pytest.mark.slow


class TestBenchPerformance:
    """Test bench run times"""

    def test_table2_wall_clock(self):
        """
        Test the full block-size table on one worker.
        Expected: < 30 min
        """
        start = time.time()
        frame = ExperimentService.reproduce_table2(validate_config({"name": "table2"}), workers=1)
        duration = time.time() - start

        print(f"\nBlock-size table: {duration:.1f}s for {len(frame)} block sizes")

        assert len(frame) == 5
        assert duration < 30 * 60, f"Table too slow: {duration:.0f}s (expected < 1800s)"

    def test_single_debiased_replication(self):
        """
        Test one replication of the debiased estimator at x = 0.
        Expected: < 1 s
        """
        cfg = validate_config({"name": "timing", "replications": 1, "estimator": {"kind": "debiased"}})
        ExperimentService.run_experiment(cfg)

        start = time.time()
        ExperimentService.run_experiment(cfg)
        duration = time.time() - start

        print(f"\nDebiased replication: {duration * 1000:.2f}ms")

        assert duration < 1.0, f"Replication too slow: {duration * 1000:.0f}ms (expected < 1000ms)"
