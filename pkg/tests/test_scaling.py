import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedids.data import FlowDataset, synthetic_schema
from fedids.errors import ConfigError, EmptyInputError, ProtocolError, SchemaError
from fedids.scaling import (
    MinMaxScaler,
    client_update,
    count_retained_bounds,
    init_scaler,
    load_scaler,
    ring_orchestrate,
    save_scaler,
    scale,
)


def dataset(rows, name="d"):
    rows = np.asarray(rows, dtype=float)
    return FlowDataset(rows, None, synthetic_schema(rows.shape[1]), name)


class TestInit:
    def test_sentinel_placeholders_always_replaced(self):
        scaler = init_scaler(3)
        updated = client_update(scaler, np.array([[5.0, -2.0, 0.0]]))
        np.testing.assert_array_equal(updated.mins, [5.0, -2.0, 0.0])
        np.testing.assert_array_equal(updated.maxs, [5.0, -2.0, 0.0])

    def test_random_mode_deterministic(self):
        a = init_scaler(10, "random", np.random.default_rng(4))
        b = init_scaler(10, "random", np.random.default_rng(4))
        assert a == b
        assert a.initialized_randomly

    def test_random_draw_pair_swapped(self):
        # whichever of the two per-feature draws is larger becomes the max
        rng = np.random.default_rng(8)
        expected = rng.uniform(-1, 1, size=(2, 5))
        scaler = init_scaler(5, "random", np.random.default_rng(8))
        np.testing.assert_array_equal(scaler.mins, expected.min(axis=0))
        np.testing.assert_array_equal(scaler.maxs, expected.max(axis=0))
        assert np.all(scaler.mins <= scaler.maxs)

    def test_bad_distribution_params(self):
        with pytest.raises(ConfigError):
            init_scaler(3, "random", np.random.default_rng(0), low=1.0, high=-1.0)
        with pytest.raises(ConfigError):
            init_scaler(3, "bogus")


class TestClientUpdate:
    def test_within_bounds_no_change(self):
        scaler = MinMaxScaler(np.zeros(2), np.full(2, 10.0))
        out = client_update(scaler, np.array([[2.0, 8.0], [3.0, 4.0]]))
        assert out == scaler

    def test_out_of_bounds_widens(self):
        scaler = MinMaxScaler(np.zeros(1), np.full(1, 10.0))
        out = client_update(scaler, np.array([[-5.0], [12.0]]))
        np.testing.assert_array_equal(out.mins, [-5.0])
        np.testing.assert_array_equal(out.maxs, [12.0])

    def test_empty_dataset_unchanged(self):
        scaler = MinMaxScaler(np.zeros(2), np.ones(2))
        out = client_update(scaler, np.empty((0, 2)))
        assert out == scaler

    def test_width_mismatch(self):
        with pytest.raises(SchemaError):
            client_update(MinMaxScaler(np.zeros(2), np.ones(2)), np.ones((1, 3)))

    def test_idempotent(self):
        rows = np.random.default_rng(0).normal(size=(10, 4))
        once = client_update(init_scaler(4), rows)
        twice = client_update(once, rows)
        assert once == twice

    @given(st.integers(0, 2**32 - 1), st.integers(1, 5))
    @settings(max_examples=50, deadline=None)
    def test_monotone_widening(self, seed, n_updates):
        rng = np.random.default_rng(seed)
        scaler = init_scaler(4, "random", rng)
        for _ in range(n_updates):
            rows = rng.normal(scale=rng.uniform(0.1, 5.0), size=(rng.integers(1, 8), 4))
            updated = client_update(scaler, rows)
            assert np.all(updated.mins <= scaler.mins)
            assert np.all(updated.maxs >= scaler.maxs)
            scaler = updated


class TestRing:
    def three_clients(self, seed=0):
        rng = np.random.default_rng(seed)
        return {
            f"c{i}": dataset(rng.normal(loc=rng.uniform(-3, 3), size=(rng.integers(2, 12), 4)))
            for i in range(3)
        }

    def test_single_client_sentinel(self):
        rows = np.array([[1.0, -1.0], [3.0, 5.0]])
        scaler = ring_orchestrate({"only": dataset(rows)}, rng=np.random.default_rng(0))
        np.testing.assert_array_equal(scaler.mins, rows.min(axis=0))
        np.testing.assert_array_equal(scaler.maxs, rows.max(axis=0))
        assert scaler.visit_log == ["only"]

    def test_order_invariance_all_permutations(self):
        clients = self.three_clients(7)
        results = [
            ring_orchestrate(clients, order=list(perm))
            for perm in itertools.permutations(clients)
        ]
        for r in results[1:]:
            assert r == results[0]

    def test_sentinel_equals_bruteforce_union(self):
        clients = self.three_clients(9)
        scaler = ring_orchestrate(clients, rng=np.random.default_rng(1))
        union = np.vstack([c.features for c in clients.values()])
        np.testing.assert_array_equal(scaler.mins, union.min(axis=0))
        np.testing.assert_array_equal(scaler.maxs, union.max(axis=0))

    def test_random_init_outside_hull_survives(self):
        clients = {"a": dataset([[0.0, 0.0], [1.0, 1.0]])}
        wide = MinMaxScaler(np.array([-100.0, -100.0]), np.array([100.0, 100.0]), True)
        scaler = ring_orchestrate(
            clients, rng=np.random.default_rng(0), initial=wide, n_features=2
        )
        assert scaler == MinMaxScaler(wide.mins, wide.maxs, True)

    def test_random_init_dominates_sentinel(self):
        clients = self.three_clients(13)
        sent = ring_orchestrate(clients, "sentinel", np.random.default_rng(2))
        rand = ring_orchestrate(clients, "random", np.random.default_rng(2))
        assert np.all(rand.mins <= sent.mins)
        assert np.all(rand.maxs >= sent.maxs)

    def test_visit_log_covers_everyone_once(self):
        clients = self.three_clients(3)
        scaler = ring_orchestrate(clients, rng=np.random.default_rng(5))
        assert sorted(scaler.visit_log) == sorted(clients)

    def test_bad_order_rejected(self):
        clients = self.three_clients(3)
        with pytest.raises(ProtocolError):
            ring_orchestrate(clients, order=["c0", "c0", "c1"])

    def test_unreachable_client_is_protocol_error(self):
        def failing(cid, scaler):
            raise RuntimeError("socket down")

        with pytest.raises(ProtocolError, match="c0"):
            ring_orchestrate(
                {"c0": dataset([[1.0]])},
                rng=np.random.default_rng(0),
                update_fn=failing,
                n_features=1,
            )

    def test_empty_ring(self):
        with pytest.raises(EmptyInputError):
            ring_orchestrate({}, rng=np.random.default_rng(0))

    def test_retained_bounds_count(self):
        initial = MinMaxScaler(np.array([-10.0, 0.4]), np.array([10.0, 0.6]), True)
        final = client_update(initial, np.array([[-1.0, -1.0], [1.0, 1.0]]))
        # feature 0 keeps both random bounds, feature 1 loses both
        assert count_retained_bounds(initial, final) == 1


class TestScale:
    def test_endpoints(self):
        scaler = MinMaxScaler(np.array([0.0, -2.0]), np.array([10.0, 2.0]))
        np.testing.assert_array_equal(scale(scaler, scaler.mins), [0.0, 0.0])
        np.testing.assert_array_equal(scale(scaler, scaler.maxs), [1.0, 1.0])

    def test_midpoint(self):
        scaler = MinMaxScaler(np.array([0.0]), np.array([10.0]))
        np.testing.assert_array_equal(scale(scaler, np.array([5.0])), [0.5])

    def test_degenerate_feature_maps_to_zero(self):
        scaler = MinMaxScaler(np.array([3.0, 0.0]), np.array([3.0, 1.0]))
        out = scale(scaler, np.array([99.0, 0.5]))
        np.testing.assert_array_equal(out, [0.0, 0.5])

    def test_unclamped_by_default(self):
        scaler = MinMaxScaler(np.array([0.0]), np.array([1.0]))
        assert scale(scaler, np.array([2.0]))[0] == 2.0
        assert scale(scaler, np.array([2.0]), clamp=True)[0] == 1.0

    def test_width_mismatch(self):
        with pytest.raises(SchemaError):
            scale(MinMaxScaler(np.zeros(2), np.ones(2)), np.ones(3))


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(17)
        scaler = MinMaxScaler(
            rng.normal(size=6) * 1e-7, rng.normal(size=6) * 1e9 + 1e10, True
        )
        path = tmp_path / "scaler.txt"
        save_scaler(scaler, path)
        loaded, names = load_scaler(path)
        assert loaded == scaler
        assert len(names) == 6

    def test_sentinel_infinities_round_trip(self, tmp_path):
        scaler = init_scaler(3)
        path = tmp_path / "scaler.txt"
        save_scaler(scaler, path, feature_names=["a", "b", "c"])
        loaded, names = load_scaler(path)
        assert names == ["a", "b", "c"]
        assert np.all(np.isposinf(loaded.mins))
        assert np.all(np.isneginf(loaded.maxs))

    def test_rejects_other_files(self, tmp_path):
        p = tmp_path / "not_scaler.txt"
        p.write_text("hello\n")
        with pytest.raises(SchemaError):
            load_scaler(p)
