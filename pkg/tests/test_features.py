import warnings

import numpy as np
import pytest

from cvrpreopt.features import (
    BOOLEAN_FEATURES,
    FEATURE_NAMES,
    Dataset,
    Scaler,
    _split_counts,
    build_dataset,
    dataset_from_csv,
    dataset_to_csv,
    edge_key,
    extract_features,
    make_labels,
    neighbor_ranks,
    similarity,
    solution_edges,
)
from cvrpreopt.instance import Instance, Scenario, perturb
from cvrpreopt.solver import best_of_k, make_solution, savings_construct

from conftest import random_instance


def edges_of(routes):
    # independent oracle: edge set straight from client tuples
    out = set()
    for clients in routes:
        path = (0,) + tuple(clients) + (0,)
        out.update(tuple(sorted(p)) for p in zip(path, path[1:]))
    return out


@pytest.fixture
def line_instance():
    # depot (0,0); client 1 at (1,0), client 2 at (2,0), client 3 far away
    return Instance(
        name="line", capacity=20,
        coords=np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [10.0, 10.0]]),
        demands=np.array([0, 2, 3, 4]),
    )


class TestEdgeKey:
    def test_canonical_order(self):
        assert edge_key(5, 2) == (2, 5)
        assert edge_key(0, 7) == (0, 7)

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError):
            edge_key(3, 3)


class TestExtractFeatures:
    def test_depot_edge(self, line_instance):
        v = extract_features(line_instance, line_instance, (0, 1))
        assert v[FEATURE_NAMES.index("is_depot_edge")] == 1.0
        assert v[FEATURE_NAMES.index("demand_i_old")] == 0.0
        assert v[FEATURE_NAMES.index("demand_i_new")] == 0.0

    def test_unperturbed_pair(self, line_instance):
        v = extract_features(line_instance, line_instance, (1, 2))
        assert v[FEATURE_NAMES.index("demand_changed_i")] == 0.0
        assert v[FEATURE_NAMES.index("demand_changed_j")] == 0.0
        assert v[FEATURE_NAMES.index("demand_i_old")] == v[FEATURE_NAMES.index("demand_i_new")]
        assert v[FEATURE_NAMES.index("demand_j_old")] == v[FEATURE_NAMES.index("demand_j_new")]

    def test_changed_flags_follow_selection(self, line_instance):
        pm = perturb(line_instance, Scenario(30, "S", 5, seed=0))
        (changed,) = [c for c in pm.changed]
        other = [c for c in (1, 2, 3) if c != changed][0]
        v = extract_features(line_instance, pm, (min(changed, other), max(changed, other)))
        i_changed = v[FEATURE_NAMES.index("demand_changed_i")]
        j_changed = v[FEATURE_NAMES.index("demand_changed_j")]
        assert {i_changed, j_changed} == {0.0, 1.0}

    def test_nearest_neighbor_rank_is_one(self, line_instance):
        # client 1 is the nearest neighbor of client 2
        v = extract_features(line_instance, line_instance, (1, 2))
        assert v[FEATURE_NAMES.index("rank_i_from_j")] == 1.0
        # from client 1 the depot (id 0) wins the distance tie with client 2
        assert v[FEATURE_NAMES.index("rank_j_from_i")] == 2.0

    def test_rank_tie_broken_by_node_id(self, line_instance):
        ranks = neighbor_ranks(line_instance)
        assert ranks[1, 0] == 1  # depot and client 2 both at distance 1
        assert ranks[1, 2] == 2

    def test_order_insensitive(self, line_instance):
        a = extract_features(line_instance, line_instance, (2, 1))
        b = extract_features(line_instance, line_instance, (1, 2))
        assert np.array_equal(a, b)

    def test_vector_length(self, line_instance):
        assert extract_features(line_instance, line_instance, (0, 3)).shape == (16,)

    def test_out_of_range(self, line_instance):
        with pytest.raises(ValueError):
            extract_features(line_instance, line_instance, (1, 9))


class TestLabels:
    def test_identical_solutions_all_one(self):
        inst = random_instance(8, 1)
        sol = savings_construct(inst)
        labels = make_labels(sol, sol)
        assert set(labels.values()) == {1}
        assert set(labels) == solution_edges(sol)

    def test_edge_disjoint_all_zero(self):
        inst = random_instance(6, 2, capacity=100)
        so = make_solution(inst, [[(c, False) for c in (1, 2, 3)], [(c, False) for c in (4, 5, 6)]])
        sm = make_solution(inst, [[(c, False) for c in (2, 6, 1, 4, 3, 5)]])
        assert not (solution_edges(so) & solution_edges(sm))
        assert set(make_labels(so, sm).values()) == {0}
        assert similarity(so, sm) == 0.0

    def test_labels_match_set_intersection_oracle(self):
        # 110 nodes: build one solution, then rearrange a few routes
        inst = random_instance(109, 5, capacity=60, demand_hi=10)
        so = savings_construct(inst)
        routes = [list(r.clients()) for r in so.routes]
        # deterministic rearrangement: swap the heads of two routes, reverse another
        routes[0][0], routes[1][0] = routes[1][0], routes[0][0]
        routes[2] = routes[2][::-1]
        sm = make_solution(inst, [[(c, False) for c in r] for r in routes])
        labels = make_labels(so, sm)
        eo, em = edges_of([r.clients() for r in so.routes]), edges_of([r.clients() for r in sm.routes])
        assert set(labels) == eo
        for e, y in labels.items():
            assert y == (1 if e in em else 0)
        assert similarity(so, sm) == len(eo & em) / len(eo)

    def test_single_client_route_collapses_depot_edge(self):
        inst = random_instance(2, 3, capacity=50)
        so = make_solution(inst, [[(1, False)], [(2, False)]])
        assert solution_edges(so) == {(0, 1), (0, 2)}


class TestSimilarity:
    def test_identity_is_one(self):
        for seed in range(5):
            inst = random_instance(10, seed)
            sol = savings_construct(inst)
            assert similarity(sol, sol) == 1.0

    def test_equals_mean_label(self):
        inst = random_instance(20, 7)
        so = best_of_k(inst, k=1, budget=400, seed=0)
        pm = perturb(inst, Scenario(20, "M", 3, seed=5))
        sm = best_of_k(pm, k=1, budget=400, seed=1)
        labels = make_labels(so, sm)
        assert similarity(so, sm) == pytest.approx(np.mean(list(labels.values())), abs=1e-12)

    def test_small_perturbation_keeps_similarity_high(self):
        # mild scenario (10% of clients, tight interval): well above coin-flip
        rng = np.random.default_rng(12)
        coords = rng.integers(0, 101, size=(41, 2)).astype(float)
        demands = np.concatenate([[0], rng.integers(5, 11, size=40)])
        inst = Instance(name="replica-check", capacity=60, coords=coords, demands=demands)
        so = best_of_k(inst, k=3, budget=4000, seed=0)
        sims = []
        for k in range(3):
            pm = perturb(inst, Scenario(10, "S", 1, seed=100 + k))
            sm = best_of_k(pm, k=3, budget=4000, seed=200 + k)
            sims.append(similarity(so, sm))
        assert all(0.5 < s <= 1.0 for s in sims)


class TestBuildDataset:
    def _tuples(self, count, n=5, seed=0):
        inst = random_instance(n, seed, capacity=50)
        sol = savings_construct(inst)
        return [(inst, sol, inst, sol) for _ in range(count)]

    def test_split_counts_95(self):
        assert _split_counts(95, (0.7, 0.15, 0.15)) == (66, 14, 15)

    def test_split_sizes_on_95_tuples(self):
        ds = build_dataset(self._tuples(95), ratios=(0.7, 0.15, 0.15), seed=3)
        counts = {s: len(ds.instance_ids(s)) for s in ("train", "val", "test")}
        assert counts == {"train": 66, "val": 14, "test": 15}

    def test_single_tuple_all_train_with_warning(self):
        with pytest.warns(UserWarning):
            ds = build_dataset(self._tuples(1), seed=0)
        assert ds.instance_ids("train") == ["tuple-0"]
        assert ds.instance_ids("val") == [] and ds.instance_ids("test") == []

    def test_train_means_zero_after_scaling(self):
        tuples = []
        for k in range(12):
            inst = random_instance(8, 50 + k, capacity=40)
            so = savings_construct(inst)
            pm = perturb(inst, Scenario(20, "M", 3, seed=k))
            sm = best_of_k(pm, k=1, budget=300, seed=k)
            tuples.append((inst, so, pm, sm))
        ds = build_dataset(tuples, seed=1)
        X, _ = ds.matrices("train")
        scaled_cols = [
            k for k in range(len(FEATURE_NAMES))
            if k not in BOOLEAN_FEATURES and k not in ds.scaler.constant
        ]
        assert np.abs(X[:, scaled_cols].mean(axis=0)).max() < 1e-9

    def test_booleans_pass_through(self):
        ds = build_dataset(self._tuples(4), seed=2)
        X, _ = ds.matrices("train")
        for k in BOOLEAN_FEATURES:
            assert set(np.unique(X[:, k])) <= {0.0, 1.0}

    def test_no_instance_in_two_splits(self):
        ds = build_dataset(self._tuples(20), seed=4)
        by_split = [set(ds.instance_ids(s)) for s in ("train", "val", "test")]
        assert not (by_split[0] & by_split[1])
        assert not (by_split[0] & by_split[2])
        assert not (by_split[1] & by_split[2])
        # every sample's id belongs to exactly the split it is served under
        for split in ("train", "val", "test"):
            for s in ds.samples:
                if ds.split_of[s.instance_id] == split:
                    assert s.instance_id in by_split[("train", "val", "test").index(split)]

    def test_deterministic(self):
        t = self._tuples(10)
        a = build_dataset(t, seed=9)
        b = build_dataset(t, seed=9)
        assert a.split_of == b.split_of
        assert np.array_equal(a.matrices("train")[0], b.matrices("train")[0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_dataset([])


class TestPersistence:
    def test_csv_and_scaler_round_trip(self):
        inst = random_instance(6, 33, capacity=40)
        so = savings_construct(inst)
        pm = perturb(inst, Scenario(30, "S", 2, seed=1))
        sm = best_of_k(pm, k=1, budget=200, seed=0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ds = build_dataset([(inst, so, pm, sm)], seed=0)
        text = dataset_to_csv(ds)
        assert text.splitlines()[0].startswith("x_i,y_i,x_j,y_j,edge_cost")
        scaler = Scaler.from_json(ds.scaler.to_json())
        again = dataset_from_csv(text, ds.split_of, scaler)
        assert len(again.samples) == len(ds.samples)
        X0, y0 = ds.matrices("train")
        X1, y1 = again.matrices("train")
        assert np.array_equal(X0, X1) and np.array_equal(y0, y1)
