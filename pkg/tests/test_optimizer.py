import numpy as np
import pytest

from cowcka.keyrate import conference_key_rate
from cowcka.model import ExperimentParams, FreeParams
from cowcka.optimizer import OptimizerConfig, grid_oracle, optimize, sweep

SMALL = OptimizerConfig(population=20, generations=40, grid_resolution=60)


def at(L, **kw):
    return ExperimentParams(total_distance_km=L, **kw)


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"t_range": (0.0, 0.5)},
            {"t_range": (0.5, 1.0)},
            {"t_range": (0.6, 0.4)},
            {"mu_range": (0.0, 1.0)},
            {"population": 1},
            {"grid_resolution": 1},
            {"generations": 0},
            {"seed": -1},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            OptimizerConfig(**kw)


class TestGridOracle:
    def test_monotone_objective_hits_corner(self):
        cfg = OptimizerConfig(grid_resolution=7)
        fp, _ = grid_oracle(at(100), cfg, objective=lambda p, ep: -p.send_probability - p.intensity)
        assert (fp.send_probability, fp.intensity) == (cfg.t_range[0], cfg.mu_range[0])

    def test_ties_break_toward_small_t_then_mu(self):
        cfg = OptimizerConfig(grid_resolution=5)
        fp, _ = grid_oracle(at(0), cfg, objective=lambda p, ep: 1.0)
        assert (fp.send_probability, fp.intensity) == (cfg.t_range[0], cfg.mu_range[0])

    def test_two_by_two_counts_cells(self):
        seen = []

        def count(p, ep):
            seen.append((p.send_probability, p.intensity))
            return 0.0

        grid_oracle(at(10), OptimizerConfig(grid_resolution=2), objective=count)
        assert len(seen) == 4 and len(set(seen)) == 4

    def test_positive_cell_at_100km(self):
        _, rb = grid_oracle(at(100), SMALL)
        assert rb.rate > 0


class TestOptimize:
    def test_deterministic(self):
        a = optimize(at(200), SMALL)
        b = optimize(at(200), SMALL)
        assert a == b

    def test_seed_changes_search(self):
        a = optimize(at(200), SMALL)
        b = optimize(at(200), OptimizerConfig(population=20, generations=40, seed=7))
        assert a.params != b.params

    def test_returned_rate_matches_engine(self):
        fp, rb = optimize(at(150), SMALL)
        assert rb == conference_key_rate(fp, at(150))
        lo, hi = SMALL.t_range
        assert lo <= fp.send_probability <= hi
        assert SMALL.mu_range[0] <= fp.intensity <= SMALL.mu_range[1]

    def test_zero_rate_sentinel_beyond_cutoff(self):
        res = optimize(at(700), SMALL)
        assert res.is_zero_rate and res.breakdown.rate == 0.0
        # the grid confirms there is no positive cell anywhere
        assert grid_oracle(at(700), SMALL).breakdown.rate == 0.0

    def test_near_zero_distance_matches_fine_grid(self):
        cfg = OptimizerConfig(grid_resolution=200)
        ga = optimize(at(0.001), cfg).breakdown.rate
        grid = grid_oracle(at(0.001), cfg).breakdown.rate
        assert ga >= grid * (1 - 0.005)
        assert ga == pytest.approx(grid, rel=0.005)

    def test_custom_objective(self):
        target = (0.3, 0.4)
        fp, _ = optimize(at(0), SMALL, objective=lambda p, ep: -((p.send_probability - target[0]) ** 2 + (p.intensity - target[1]) ** 2))
        assert fp.send_probability == pytest.approx(target[0], abs=5e-3)
        assert fp.intensity == pytest.approx(target[1], abs=5e-3)


class TestSweep:
    def test_zero_distance_row(self):
        (row,) = sweep(ExperimentParams(), [0.0], SMALL, workers=1)
        assert row.eta_lim == 0.56 and row.distance_km == 0.0

    @pytest.mark.parametrize("bad", [[], [10.0, 10.0], [20.0, 10.0], [-5.0, 0.0]])
    def test_rejects_bad_grids(self, bad):
        with pytest.raises(ValueError):
            sweep(ExperimentParams(), bad, SMALL, workers=1)

    def test_worker_count_does_not_change_rows(self):
        ds = [0.0, 150.0, 300.0, 650.0]
        assert sweep(ExperimentParams(), ds, SMALL, workers=1) == sweep(ExperimentParams(), ds, SMALL, workers=3)

    def test_rows_are_independent(self):
        alone = sweep(ExperimentParams(), [300.0], SMALL, workers=1)[0]
        among = sweep(ExperimentParams(), [100.0, 300.0], SMALL, workers=1)[1]
        assert alone == among

    def test_optimized_rate_nonincreasing(self, sweep_1pct):
        rows, _ = sweep_1pct
        rates = [r.rate for r in rows]
        assert all(b <= a for a, b in zip(rates, rates[1:]))

    def test_rows_inside_ranges(self, sweep_1pct):
        rows, _ = sweep_1pct
        cfg = OptimizerConfig()
        for r in rows:
            assert r.rate >= 0
            assert cfg.t_range[0] <= r.best_t <= cfg.t_range[1]
            assert cfg.mu_range[0] <= r.best_mu <= cfg.mu_range[1]

    def test_contiguous_bound_breaking(self, sweep_1pct):
        rows, _ = sweep_1pct
        above = np.array([r.rate > r.eta_lim for r in rows])
        idx = np.flatnonzero(above)
        assert idx.size > 0
        assert np.all(np.diff(idx) == 1)

    def test_reach_beyond_450(self, sweep_1pct):
        rows, _ = sweep_1pct
        assert max(r.distance_km for r in rows if r.rate > 0) > 450

    def test_sqrt_scaling_slope(self, sweep_1pct):
        rows, _ = sweep_1pct
        pts = [(r.distance_km, np.log10(r.rate)) for r in rows if 100 <= r.distance_km <= 300]
        slope = np.polyfit(*zip(*pts), 1)[0]
        assert slope == pytest.approx(-0.167 / 20, rel=0.15)
