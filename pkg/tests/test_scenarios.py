"""Built-in scenarios: pinned cell counts, demand, registry behavior."""

import json

import numpy as np
import pytest

from ctmsim.network import validate
from ctmsim.scenarios import (
    TABLE_SCENARIOS, gen_arterial, gen_grid, gen_single_intersection,
    generate_demand, make,
)

# Published discretization footprint of every built-in scenario.
CELL_COUNTS = {
    "single-intersection-v0": 24,
    "grid-2x2-v0": 126, "grid-4x4-v0": 378, "grid-6x6-v0": 726,
    "grid-8x8-v0": 1170,
    "arterial-3-v0": 56, "arterial-5-v0": 88, "arterial-10-v0": 168,
    "arterial-20-v0": 328,
}


class TestCellCounts:
    @pytest.mark.parametrize("name,count", sorted(CELL_COUNTS.items()))
    def test_pinned_counts(self, name, count):
        assert make(name).compile().n_cells == count

    def test_grid_intersections(self):
        assert make("grid-4x4-v0").compile().n_sig == 16
        assert make("grid-8x8-v0").compile().n_sig == 64


class TestValidity:
    @pytest.mark.parametrize("name", TABLE_SCENARIOS)
    def test_generators_validate_clean(self, name):
        assert validate(make(name).network) == []

    @pytest.mark.parametrize("name", TABLE_SCENARIOS)
    def test_demand_keys_are_origins(self, name):
        sd = make(name)
        origins = {l.id for l in sd.network.links if l.is_origin}
        assert set(sd.demand) <= origins

    def test_default_physical_parameters(self):
        """vf/w/kj everywhere; Q default on all through roadway links."""
        for name in TABLE_SCENARIOS:
            for l in make(name).network.links:
                assert l.free_flow_speed == 13.89
                assert l.wave_speed == 5.56
                assert l.jam_density == 0.15
                if not l.id.startswith("stub_"):
                    assert l.capacity == 0.5

    def test_episode_defaults(self):
        sd = make("single-intersection-v0")
        assert sd.horizon == 720
        assert sd.decision_interval == 5.0
        assert sd.horizon * sd.decision_interval == 3600.0


class TestSingleIntersection:
    def test_structure(self):
        sd = gen_single_intersection()
        net = sd.compile()
        assert net.n_sig == 1
        assert tuple(net.sig_nphases) == (2,)
        # Paper demand split: 1080 veh/hr on each NS approach, 720 on EW.
        assert sd.demand["in_N"] * 3600 == pytest.approx(1080)
        assert sd.demand["in_E"] * 3600 == pytest.approx(720)

    def test_direction_rate_sum(self):
        sd = gen_single_intersection()
        ns_plus_ew = sd.demand["in_N"] + sd.demand["in_E"]
        assert ns_plus_ew * 3600 == pytest.approx(1800)  # 1080 + 720


class TestGrid:
    def test_observation_link_counts(self):
        """Corner/edge/center nodes carry 6/5/4 incoming links."""
        sd = gen_grid(4, 4)
        incoming = {}
        for l in sd.network.links:
            incoming[l.to_node] = incoming.get(l.to_node, 0) + 1
        counts = sorted(incoming[f"g{i}_{j}"] for i in range(4) for j in range(4))
        assert counts.count(6) == 4      # corners
        assert counts.count(5) == 8      # edges
        assert counts.count(4) == 4      # centers

    def test_bypass_links_avoid_interior(self):
        sd = gen_grid(4, 4)
        byp = [l for l in sd.network.links if l.id.startswith("byp")]
        assert len(byp) == 6
        for l in byp:
            assert l.is_origin and l.is_sink
            assert not l.from_node.startswith("g")
            assert not l.to_node.startswith("g")

    def test_turn_ratios_partition(self):
        sd = gen_grid(3, 3)
        sums = {}
        for m in sd.network.movements:
            sums[m.from_link] = sums.get(m.from_link, 0.0) + m.turn_ratio
        assert all(abs(s - 1.0) < 1e-9 for s in sums.values())

    def test_rectangular_grids_supported(self):
        sd = gen_grid(2, 3)
        assert sd.compile().n_sig == 6
        assert validate(sd.network) == []


class TestArterial:
    def test_corridor_metadata(self):
        sd = gen_arterial(5)
        assert len(sd.corridors[0]) == 5
        assert sd.compile().n_sig == 5

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            gen_arterial(1)


class TestGenerateDemand:
    def test_uniform_rate(self):
        sd = gen_grid(2, 2)
        d = generate_demand(sd.network, 1080.0)
        assert all(v == pytest.approx(0.3) for v in d.values())

    def test_zero_rate(self):
        sd = gen_grid(2, 2)
        assert all(v == 0.0 for v in generate_demand(sd.network, 0.0).values())

    def test_total_scales_with_origins(self):
        sd = gen_arterial(3)
        d = generate_demand(sd.network, 900.0)
        n_origins = sum(1 for l in sd.network.links if l.is_origin)
        assert sum(d.values()) == pytest.approx(n_origins * 0.25)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            generate_demand(gen_grid(2, 2).network, -1.0)


class TestRegistry:
    def test_known_names(self):
        assert make("single-intersection-v0").name == "single-intersection-v0"
        assert make("grid-4x4-v0").compile().n_sig == 16

    def test_unknown_name_suggests(self):
        with pytest.raises(KeyError, match="available"):
            make("no-such-v0")

    def test_deterministic(self):
        a, b = make("grid-2x2-v0"), make("grid-2x2-v0")
        assert a.network == b.network
        assert a.demand == b.demand

    def test_demand_scaling(self):
        base = make("single-intersection-v0")
        scaled = make("single-intersection-v0", demand_scale=1.3)
        for k in base.demand:
            assert scaled.demand[k] == pytest.approx(1.3 * base.demand[k])

    def test_scenario_dir_loading(self, tmp_path, monkeypatch):
        from ctmsim.network import save_network_json
        spec = gen_grid(2, 2).network
        doc = json.loads(save_network_json(spec))
        doc["metadata"]["name"] = "city-test-v0"
        doc["metadata"]["demand"] = {"byp0": 0.25}
        (tmp_path / "city.json").write_text(json.dumps(doc))
        monkeypatch.setenv("CTMSIM_SCENARIO_DIR", str(tmp_path))
        sd = make("city-test-v0")
        assert sd.name == "city-test-v0"
        assert sd.demand == {"byp0": 0.25}
        assert sd.compile().n_cells == 126
