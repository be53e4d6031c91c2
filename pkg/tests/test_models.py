"""Tests for the region-attention and graph-attention stages."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aesgraph import autodiff as ad
from aesgraph import metrics as mx
from aesgraph.config import (
    DESK_PROFILE,
    FULL_PROFILE,
    AttentionConfig,
    GraphConfig,
    ModelConfig,
)
from aesgraph.data import collate
from aesgraph.graph_attention import GraphAttentionNet
from aesgraph.model import Model, predict_records
from aesgraph.region_attention import LinearLayer, RegionAttentionNet, reweight
from aesgraph.synthetic import generate_synthetic


def desk_batch(seed=0, n=4, global_mode="narrow"):
    return collate(generate_synthetic(seed, n, profile="desk", global_mode=global_mode))


def make_attention_net(seed=0, global_mode="narrow", profile=DESK_PROFILE):
    store = ad.ParameterStore()
    cfg = AttentionConfig(profile=profile, global_mode=global_mode)
    net = RegionAttentionNet(cfg, store, np.random.default_rng(seed))
    return net, store


def make_graph_net(seed=0, profile=DESK_PROFILE, **toggles):
    store = ad.ParameterStore()
    cfg = GraphConfig(profile=profile, **toggles)
    net = GraphAttentionNet(cfg, store, np.random.default_rng(seed))
    return net, store


class TestDimensionLedger:
    def test_full_profile(self):
        p = FULL_PROFILE
        assert p.attention_input == 10 * 256 + 6144 == 8704
        assert p.head_input == 2560
        assert p.node_dim == 384
        assert p.edge_input_full == 1 + 2 * 128 + 3 == 260

    def test_desk_profile_preserves_constraints(self):
        p = DESK_PROFILE
        assert p.attention_input == p.regions * p.reduced_regional + p.reduced_global
        assert p.head_input == p.regions * p.reduced_regional
        assert p.node_dim == p.reduced_regional + p.node_global
        assert p.reduced_global % 3 == 0

    def test_edge_input_under_every_toggle_combination(self):
        k = DESK_PROFILE.pair_projection
        for vis in (False, True):
            for sem in (False, True):
                for spa in (False, True):
                    if not (vis or sem or spa):
                        with pytest.raises(ValueError, match="at least one relation"):
                            GraphConfig(profile=DESK_PROFILE, use_visual=vis,
                                        use_semantic=sem, use_spatial=spa)
                        continue
                    cfg = GraphConfig(profile=DESK_PROFILE, use_visual=vis,
                                      use_semantic=sem, use_spatial=spa)
                    expected = (1 if vis else 0) + (2 * k if sem else 0) + (3 if spa else 0)
                    assert cfg.edge_input == expected
                    assert cfg.edge_hidden == 1 + 2 * k + 3


class TestReduceRegional:
    def test_zero_weights_zero_output(self):
        net, _ = make_attention_net()
        net.regional_reduce.w.data[...] = 0.0
        net.regional_reduce.b.data[...] = 0.0
        out = net.reduce_regional(np.ones((3, 32)))
        np.testing.assert_array_equal(out.data, np.zeros((3, 8)))

    def test_full_profile_output_length(self):
        # zero-filled full-scale weights stay lazily allocated
        layer = LinearLayer(ad.Tensor(np.zeros((256, 16928))), ad.Tensor(np.zeros(256)))
        out = ad.relu(layer(ad.Tensor(np.zeros(16928))))
        assert out.shape == (256,)

    def test_desk_profile_output_length(self):
        net, _ = make_attention_net()
        assert net.reduce_regional(np.zeros((5, 10, 32))).shape == (5, 10, 8)

    def test_length_mismatch_rejected(self):
        net, _ = make_attention_net()
        with pytest.raises(ad.ShapeError):
            net.reduce_regional(np.zeros((3, 31)))


class TestReduceGlobal:
    def test_narrow_zero_weights_full_length(self):
        layer = LinearLayer(ad.Tensor(np.zeros((6144, 16928))), ad.Tensor(np.zeros(6144)))
        out = ad.relu(layer(ad.Tensor(np.zeros(16928))))
        assert out.shape == (6144,)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_wide_constant_field_equals_single_position(self):
        net, _ = make_attention_net(global_mode="wide")
        cell = np.random.default_rng(1).normal(size=64)
        grid = np.tile(cell, (2, 25, 1))
        pooled = net.reduce_global(grid)
        single = [ad.relu(block(ad.Tensor(cell))) for block in net.global_blocks]
        expected = np.concatenate([s.data for s in single])
        np.testing.assert_allclose(pooled.data, np.tile(expected, (2, 1)), atol=1e-12)

    def test_wide_output_length_full_profile(self):
        # three pointwise blocks of 16928 -> 2048, concatenated to 6144
        blocks = [LinearLayer(ad.Tensor(np.zeros((2048, 16928))), ad.Tensor(np.zeros(2048)))
                  for _ in range(3)]
        grid = ad.Tensor(np.zeros((25, 16928)))
        parts = [ad.relu(b(grid)) for b in blocks]
        out = ad.mean(ad.concat(parts, axis=-1), axis=-2)
        assert out.shape == (6144,)

    def test_wide_desk_shape(self):
        net, _ = make_attention_net(global_mode="wide")
        assert net.reduce_global(np.zeros((3, 25, 64))).shape == (3, 48)


class TestPredictAttention:
    def test_zero_weights_give_half(self):
        net, store = make_attention_net()
        for name, p in store.parameters():
            if name.startswith(("region_attention.fc", "region_attention.bn")):
                p.data[...] = 1.0 if name.endswith("gamma") else 0.0
        net.set_mode(False)
        a = net.predict_attention(ad.Tensor(np.zeros((2, 10, 8))), ad.Tensor(np.zeros((2, 48))))
        np.testing.assert_array_equal(a.data, np.full((2, 10), 0.5))

    def test_output_length_is_region_count(self):
        net, _ = make_attention_net()
        net.set_mode(False)
        rng = np.random.default_rng(2)
        a = net.predict_attention(ad.Tensor(rng.normal(size=(3, 10, 8))),
                                  ad.Tensor(rng.normal(size=(3, 48))))
        assert a.shape == (3, 10)

    def test_region_order_matters(self):
        net, _ = make_attention_net(seed=5)
        net.set_mode(False)
        rng = np.random.default_rng(3)
        rr = rng.normal(size=(1, 10, 8))
        rg = rng.normal(size=(1, 48))
        base = net.predict_attention(ad.Tensor(rr), ad.Tensor(rg)).data
        permuted = net.predict_attention(ad.Tensor(rr[:, ::-1]), ad.Tensor(rg)).data
        assert not np.allclose(base, permuted)

    def test_wrong_region_count_rejected(self):
        net, _ = make_attention_net()
        with pytest.raises(ad.ShapeError, match="predict_attention"):
            net.predict_attention(ad.Tensor(np.zeros((2, 9, 8))), ad.Tensor(np.zeros((2, 48))))

    def test_bounds_on_random_inputs(self):
        net, _ = make_attention_net(seed=7)
        net.set_mode(False)
        rng = np.random.default_rng(4)
        a = net.predict_attention(ad.Tensor(rng.normal(size=(20, 10, 8)) * 3),
                                  ad.Tensor(rng.normal(size=(20, 48)) * 3))
        assert ((a.data > 0.0) & (a.data < 1.0)).all()


class TestReweight:
    def test_ones_identity(self):
        v = np.arange(6.0).reshape(1, 2, 3)
        np.testing.assert_array_equal(reweight(v, np.ones((1, 2))).data, v)

    def test_zeros(self):
        v = np.arange(6.0).reshape(1, 2, 3)
        np.testing.assert_array_equal(reweight(v, np.zeros((1, 2))).data, np.zeros_like(v))

    def test_scalar_scaling(self):
        out = reweight(np.array([[[2.0, 4.0]]]), np.array([[0.5]]))
        np.testing.assert_array_equal(out.data, [[[1.0, 2.0]]])

    @settings(max_examples=25)
    @given(st.integers(min_value=0, max_value=2 ** 31 - 1))
    def test_composition_equals_product(self, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(2, 4, 3))
        a1 = rng.uniform(0.1, 0.9, size=(2, 4))
        a2 = rng.uniform(0.1, 0.9, size=(2, 4))
        twice = reweight(reweight(v, a1), a2).data
        once = reweight(v, a1 * a2).data
        np.testing.assert_allclose(twice, once, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ad.ShapeError):
            reweight(np.zeros((1, 3, 2)), np.zeros((1, 4)))


class TestRegionArmForward:
    def test_distribution_sums_to_one(self):
        model = Model(ModelConfig(arch="region"), seed=0)
        out = model.forward(desk_batch())
        np.testing.assert_allclose(out.distribution.data.sum(axis=1), 1.0, atol=1e-9)

    def test_zero_weights_uniform_distribution(self):
        model = Model(ModelConfig(arch="region"), seed=0)
        model.head.fc.w.data[...] = 0.0
        model.head.fc.b.data[...] = 0.0
        out = model.forward(desk_batch())
        np.testing.assert_allclose(out.distribution.data, 0.1, atol=1e-12)

    def test_eval_forward_is_pure(self):
        model = Model(ModelConfig(arch="region"), seed=1)
        batch = desk_batch(seed=3)
        model.set_train(False)
        a = model.forward(batch).distribution.data
        b = model.forward(batch).distribution.data
        assert (a == b).all()

    def test_gradcheck_with_emd(self):
        model = Model(ModelConfig(arch="region"), seed=2)
        batch = desk_batch(seed=4, n=3)
        model.set_train(True)

        def fn():
            out = model.forward(batch)
            return ad.mean(mx.emd_loss(batch.distributions, out.distribution))

        err = ad.finite_difference_check(fn, model.store, max_coords=10, seed=0)
        assert err <= 1e-4


class TestGraphNodes:
    def test_node_dim_and_shared_global_suffix(self):
        net, _ = make_graph_net()
        rng = np.random.default_rng(5)
        nodes = net.build_nodes(ad.Tensor(rng.normal(size=(2, 10, 8))),
                                ad.Tensor(rng.normal(size=(2, 48))))
        assert nodes.shape == (2, 10, 12)
        suffix = nodes.data[:, :, 8:]
        for i in range(10):
            np.testing.assert_array_equal(suffix[:, i], suffix[:, 0])

    def test_zero_global_path(self):
        net, _ = make_graph_net()
        net.node_global.w.data[...] = 0.0
        net.node_global.b.data[...] = 0.0
        rng = np.random.default_rng(6)
        weighted = rng.normal(size=(1, 10, 8))
        nodes = net.build_nodes(ad.Tensor(weighted), ad.Tensor(rng.normal(size=(1, 48))))
        np.testing.assert_array_equal(nodes.data[..., :8], weighted)
        np.testing.assert_array_equal(nodes.data[..., 8:], 0.0)


class TestRelationFeatures:
    def test_self_pair(self):
        net, _ = make_graph_net()
        rng = np.random.default_rng(7)
        h = ad.Tensor(rng.normal(size=12))
        from aesgraph.geometry import Box
        box = Box(0.1, 0.1, 0.5, 0.6)
        s, c, d = net.relation_features(h, h, box, box)
        assert s.item() == 0.0
        np.testing.assert_array_equal(d, [0.0, 0.0, 1.0])
        assert c.shape == (16,)

    def test_symmetry_and_swap(self):
        net, _ = make_graph_net()
        rng = np.random.default_rng(8)
        hi, hj = ad.Tensor(rng.normal(size=12)), ad.Tensor(rng.normal(size=12))
        from aesgraph.geometry import Box
        bi, bj = Box(0, 0, 0.4, 0.4), Box(0.5, 0.5, 0.9, 0.9)
        s_ij, c_ij, _ = net.relation_features(hi, hj, bi, bj)
        s_ji, c_ji, _ = net.relation_features(hj, hi, bj, bi)
        assert s_ij.item() == pytest.approx(s_ji.item(), abs=1e-12)
        k = 8
        np.testing.assert_array_equal(c_ij.data[:k], c_ji.data[k:])
        np.testing.assert_array_equal(c_ij.data[k:], c_ji.data[:k])

    def test_batched_pairs_match_single_pair_path(self):
        net, _ = make_graph_net(seed=9)
        rng = np.random.default_rng(9)
        from aesgraph.geometry import Box, spatial_matrix
        nodes = rng.normal(size=(1, 10, 12))
        boxes = []
        for _ in range(10):
            x0, y0 = rng.uniform(0, 0.6, 2)
            boxes.append(Box(x0, y0, x0 + rng.uniform(0.1, 0.3), y0 + rng.uniform(0.1, 0.3)))
        spatial = spatial_matrix(boxes)[None]
        alpha = net.edge_attention(ad.Tensor(nodes), spatial)
        # recompute one edge logit through the single-pair contract path
        i, j = 2, 5
        s, c, d = net.relation_features(ad.Tensor(nodes[0, i]), ad.Tensor(nodes[0, j]),
                                        boxes[i], boxes[j])
        e_in = np.concatenate([[s.item()], c.data, d])
        hidden = np.maximum(net.edge_fc1.w.data @ e_in + net.edge_fc1.b.data, 0.0)
        logit = net.edge_fc2.w.data @ hidden
        # softmax row recomputed from scratch must match alpha[0, i, j]
        logits_row = []
        for jj in range(10):
            s2, c2, d2 = net.relation_features(ad.Tensor(nodes[0, i]), ad.Tensor(nodes[0, jj]),
                                               boxes[i], boxes[jj])
            e2 = np.concatenate([[s2.item()], c2.data, d2])
            h2 = np.maximum(net.edge_fc1.w.data @ e2 + net.edge_fc1.b.data, 0.0)
            logits_row.append(float((net.edge_fc2.w.data @ h2)[0]))
        row = np.exp(logits_row - np.max(logits_row))
        row /= row.sum()
        assert alpha.data[0, i, j] == pytest.approx(row[j], abs=1e-12)
        assert float(logit[0]) == pytest.approx(logits_row[j], abs=1e-12)


class TestEdgeAttention:
    def test_rows_sum_to_one(self):
        net, _ = make_graph_net(seed=10)
        rng = np.random.default_rng(10)
        batch = desk_batch(seed=11, n=3)
        nodes = ad.Tensor(rng.normal(size=(3, 10, 12)))
        spatial = GraphAttentionNet.spatial_block(batch.boxes)
        alpha = net.edge_attention(nodes, spatial)
        np.testing.assert_allclose(alpha.data.sum(axis=2), 1.0, atol=1e-9)
        assert (alpha.data > 0.0).all()

    def test_zero_scorer_uniform(self):
        net, _ = make_graph_net(seed=11)
        net.edge_fc1.w.data[...] = 0.0
        net.edge_fc1.b.data[...] = 0.0
        net.edge_fc2.w.data[...] = 0.0
        rng = np.random.default_rng(12)
        batch = desk_batch(seed=12, n=2)
        alpha = net.edge_attention(ad.Tensor(rng.normal(size=(2, 10, 12))),
                                   GraphAttentionNet.spatial_block(batch.boxes))
        np.testing.assert_allclose(alpha.data, 0.1, atol=1e-12)

    def test_ablation_toggles_change_scorer_width(self):
        for toggles, width in ((dict(use_visual=True, use_semantic=False, use_spatial=False), 1),
                               (dict(use_visual=True, use_semantic=False, use_spatial=True), 4),
                               (dict(use_visual=True, use_semantic=True, use_spatial=True), 20)):
            net, _ = make_graph_net(**toggles)
            assert net.edge_fc1.w.shape == (20, width)
            batch = desk_batch(seed=13, n=2)
            rng = np.random.default_rng(13)
            alpha = net.edge_attention(ad.Tensor(rng.normal(size=(2, 10, 12))),
                                       GraphAttentionNet.spatial_block(batch.boxes))
            np.testing.assert_allclose(alpha.data.sum(axis=2), 1.0, atol=1e-9)


class TestAggregate:
    def test_uniform_attention_equals_mean_formula(self):
        net, _ = make_graph_net(seed=14)
        rng = np.random.default_rng(14)
        nodes = rng.normal(size=(1, 10, 12))
        alpha = ad.Tensor(np.full((1, 10, 10), 0.1))
        out = net.aggregate(ad.Tensor(nodes), alpha)
        pre = net.aggregate_map.w.data @ nodes[0].mean(axis=0)
        expected = np.where(pre > 0, pre, np.expm1(pre))
        for i in range(10):
            np.testing.assert_allclose(out.data[0, i], expected, atol=1e-9)

    def test_zero_map_gives_zero(self):
        net, _ = make_graph_net(seed=15)
        net.aggregate_map.w.data[...] = 0.0
        rng = np.random.default_rng(15)
        out = net.aggregate(ad.Tensor(rng.normal(size=(1, 10, 12))),
                            ad.Tensor(np.full((1, 10, 10), 0.1)))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_output_dim(self):
        net, _ = make_graph_net(seed=16)
        rng = np.random.default_rng(16)
        out = net.aggregate(ad.Tensor(rng.normal(size=(2, 10, 12))),
                            ad.Tensor(np.full((2, 10, 10), 0.1)))
        assert out.shape == (2, 10, 8)


def permute_graph_inputs(weighted, boxes, perm):
    return weighted[:, perm], [boxes[p] for p in perm]


class TestPermutationEquivariance:
    def test_graph_stage_is_equivariant(self):
        rng = np.random.default_rng(17)
        net, _ = make_graph_net(seed=17)
        from aesgraph.geometry import Box
        for trial in range(5):
            weighted = rng.normal(size=(1, 10, 8))
            reduced_global = rng.normal(size=(1, 48))
            boxes = []
            for _ in range(10):
                x0, y0 = rng.uniform(0, 0.6, 2)
                boxes.append(Box(x0, y0, x0 + rng.uniform(0.1, 0.3), y0 + rng.uniform(0.1, 0.3)))
            spatial = GraphAttentionNet.spatial_block([boxes])
            _, base = net.forward(ad.Tensor(weighted), ad.Tensor(reduced_global), spatial)
            perm = rng.permutation(10)
            pw, pboxes = permute_graph_inputs(weighted, boxes, perm)
            pspatial = GraphAttentionNet.spatial_block([pboxes])
            _, permuted = net.forward(ad.Tensor(pw), ad.Tensor(reduced_global), pspatial)
            np.testing.assert_allclose(permuted.data[0], base.data[0][perm], atol=1e-9)


class TestGraphArmForward:
    def test_distribution_and_logs(self):
        model = Model(ModelConfig(arch="graph"), seed=3)
        out = model.forward(desk_batch(seed=18))
        np.testing.assert_allclose(out.distribution.data.sum(axis=1), 1.0, atol=1e-9)
        assert out.attention.shape == (4, 10)
        assert out.alpha.shape == (4, 10, 10)
        np.testing.assert_allclose(out.alpha.data.sum(axis=2), 1.0, atol=1e-9)

    def test_zero_weights_uniform(self):
        model = Model(ModelConfig(arch="graph"), seed=3)
        model.head.fc.w.data[...] = 0.0
        model.head.fc.b.data[...] = 0.0
        out = model.forward(desk_batch(seed=19))
        np.testing.assert_allclose(out.distribution.data, 0.1, atol=1e-12)

    def test_gradcheck_with_emd(self):
        model = Model(ModelConfig(arch="graph"), seed=4)
        batch = desk_batch(seed=20, n=3)
        model.set_train(True)

        def fn():
            out = model.forward(batch)
            return ad.mean(mx.emd_loss(batch.distributions, out.distribution))

        err = ad.finite_difference_check(fn, model.store, max_coords=8, seed=1)
        assert err <= 1e-4

    def test_wide_global_mode_forward(self):
        profile = DESK_PROFILE
        cfg = ModelConfig(arch="graph",
                          attention=AttentionConfig(profile=profile, global_mode="wide"),
                          graph=GraphConfig(profile=profile))
        model = Model(cfg, seed=5)
        out = model.forward(desk_batch(seed=21, global_mode="wide"))
        np.testing.assert_allclose(out.distribution.data.sum(axis=1), 1.0, atol=1e-9)


class TestCheckpointRoundTrip:
    def test_save_load_save_byte_identical(self, tmp_path):
        model = Model(ModelConfig(arch="graph"), seed=6)
        path1 = tmp_path / "a.ckpt"
        model.save(path1)
        reloaded = Model.load(path1)
        path2 = tmp_path / "b.ckpt"
        reloaded.save(path2)
        assert path1.read_bytes() == path2.read_bytes()

    def test_loaded_model_predicts_identically(self, tmp_path):
        model = Model(ModelConfig(arch="region"), seed=7)
        records = generate_synthetic(22, 6, profile="desk")
        preds = predict_records(model, records)
        path = tmp_path / "m.ckpt"
        model.save(path)
        reloaded = Model.load(path)
        preds2 = predict_records(reloaded, records)
        np.testing.assert_array_equal(preds.distributions, preds2.distributions)

    def test_config_restored(self, tmp_path):
        cfg = ModelConfig(arch="graph",
                          attention=AttentionConfig(profile=DESK_PROFILE, global_mode="narrow"),
                          graph=GraphConfig(profile=DESK_PROFILE, use_semantic=False))
        model = Model(cfg, seed=8)
        path = tmp_path / "m.ckpt"
        model.save(path)
        assert Model.load(path).config == cfg

    def test_baseline_arch_round_trip(self, tmp_path):
        model = Model(ModelConfig(arch="baseline"), seed=9)
        batch = desk_batch(seed=23)
        out = model.forward(batch)
        assert out.attention is None and out.alpha is None
        path = tmp_path / "b.ckpt"
        model.save(path)
        out2 = Model.load(path).forward(batch)
        np.testing.assert_array_equal(out.distribution.data, out2.distribution.data)
