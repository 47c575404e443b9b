import numpy as np
import pytest

from depgat import autodiff as ad
from depgat import taskgat as tg
from depgat.dataio import ConfigError, DataError, FeatureSpec
from depgat.structure import BinaryGraph


def real_spec(p):
    return FeatureSpec(names=[f"x{i}" for i in range(p)],
                       kinds=["real"] * p, levels=[None] * p)


def graph_of(mask):
    return BinaryGraph(z=ad.constant(np.asarray(mask, dtype=np.float64)), tau=0.0)


def dense_attention_oracle(h, w, a_src, a_dst, mask, slope=tg.LEAKY_SLOPE,
                           eps=tg.MASK_EPS):
    """Direct per-pair evaluation: score over the concatenated projections."""
    a_e = np.concatenate([a_src.ravel(), a_dst.ravel()])
    B, n, _ = h.shape
    wh = h @ w
    alpha = np.zeros((B, n, n))
    for b in range(B):
        for i in range(n):
            raw = np.array([np.concatenate([wh[b, i], wh[b, j]]) @ a_e for j in range(n)])
            raw = np.where(raw > 0, raw, slope * raw)
            raw = raw + np.log(mask[i] + eps)
            e = np.exp(raw - raw.max())
            alpha[b, i] = e / e.sum()
    return alpha, wh


def full_mask(encoder, z):
    """Attention mask the encoder derives from a feature graph, as plain numpy."""
    return encoder.attention_log_mask(ad.constant(z)).values


class TestEmbeddings:
    def test_identical_values_get_distinct_embeddings(self):
        enc = tg.GraphAttentionNet(real_spec(2), d_pos=16, hidden=8, layers=1, heads=2,
                                   rng=np.random.default_rng(0))
        h = enc.initial_embeddings(np.array([[0.7, 0.7]])).values
        assert not np.allclose(h[0, 0], h[0, 1])

    def test_degenerate_config_is_raw_value(self):
        enc = tg.GraphAttentionNet(real_spec(3), d_pos=0, hidden=8, layers=1, heads=2,
                                   include_full_x=False, rng=np.random.default_rng(0))
        x = np.array([[1.0, -2.0, 0.5]])
        h = enc.initial_embeddings(x).values
        assert h.shape == (1, 4, 1)
        assert np.allclose(h[0, :3, 0], x[0])

    def test_width_arithmetic(self):
        enc = tg.GraphAttentionNet(real_spec(8), d_pos=16, hidden=8, layers=1, heads=2,
                                   include_full_x=True)
        assert enc.width0 == 1 + 16 + 8

    def test_uniform_width_includes_cls(self):
        enc = tg.GraphAttentionNet(real_spec(4), d_pos=4, hidden=8, layers=1, heads=2)
        h = enc.initial_embeddings(np.zeros((2, 4))).values
        assert h.shape == (2, 5, enc.width0)

    def test_sample_width_mismatch_rejected(self):
        enc = tg.GraphAttentionNet(real_spec(4), d_pos=4, hidden=8, layers=1, heads=2)
        with pytest.raises(ad.DimensionError, match="width"):
            enc.initial_embeddings(np.zeros((2, 5)))


class TestAttention:
    def test_isolated_node_attends_only_itself(self):
        enc = tg.GraphAttentionNet(real_spec(4), d_pos=4, hidden=8, layers=1, heads=1,
                                   rng=np.random.default_rng(1))
        alpha = enc.attention_scores(np.random.default_rng(2).normal(size=(3, 4)),
                                     graph_of(np.zeros((4, 4))))
        for i in range(4):
            assert alpha[:, i, i].min() > 0.999

    def test_two_identical_targets_share_attention(self):
        enc = tg.GraphAttentionNet(real_spec(3), d_pos=0, hidden=8, layers=1, heads=1,
                                   include_full_x=False, rng=np.random.default_rng(3))
        # all features carry the same value, so node 0's two targets (itself
        # and its single neighbor) have identical embeddings
        z = np.zeros((3, 3))
        z[1, 0] = 1.0
        alpha = enc.attention_scores(np.full((2, 3), 0.4), graph_of(z))
        assert alpha[:, 0, 0] == pytest.approx(0.5, abs=1e-7)
        assert alpha[:, 0, 1] == pytest.approx(0.5, abs=1e-7)

    def test_rows_with_neighbors_sum_to_one(self):
        rng = np.random.default_rng(4)
        enc = tg.GraphAttentionNet(real_spec(5), d_pos=4, hidden=8, layers=2, heads=2,
                                   rng=rng)
        z = rng.uniform(0, 1, size=(5, 5))
        np.fill_diagonal(z, 0)
        for layer in range(2):
            for head in range(2):
                alpha = enc.attention_scores(rng.normal(size=(3, 5)), graph_of(z),
                                             layer, head)
                assert np.abs(alpha.sum(axis=-1) - 1.0).max() < 1e-9
                assert (alpha >= 0).all()

    def test_matches_dense_pairwise_oracle(self):
        rng = np.random.default_rng(5)
        enc = tg.GraphAttentionNet(real_spec(4), d_pos=4, hidden=6, layers=1, heads=1,
                                   rng=rng)
        z = rng.uniform(0, 1, size=(4, 4))
        np.fill_diagonal(z, 0)
        x = rng.normal(size=(2, 4))
        alpha = enc.attention_scores(x, graph_of(z))

        h = enc.initial_embeddings(x).values
        mask = np.exp(full_mask(enc, z)) - tg.MASK_EPS
        expected, _ = dense_attention_oracle(h, enc.w[0][0].values,
                                             enc.a_src[0][0].values,
                                             enc.a_dst[0][0].values, mask)
        assert np.abs(alpha - expected).max() < 1e-10

    def test_cls_attends_everyone_but_is_invisible(self):
        enc = tg.GraphAttentionNet(real_spec(3), d_pos=4, hidden=8, layers=1, heads=1,
                                   rng=np.random.default_rng(6))
        z = np.ones((3, 3)) - np.eye(3)
        alpha = enc.attention_scores(np.random.default_rng(7).normal(size=(2, 3)),
                                     graph_of(z))
        assert alpha[:, 3, :].min() > 0.01          # CLS row touches all nodes
        assert alpha[:, :3, 3].max() < 1e-6         # feature rows ignore CLS


class TestLayer:
    def test_isolated_nodes_reduce_to_self_projection(self):
        rng = np.random.default_rng(8)
        enc = tg.GraphAttentionNet(real_spec(3), d_pos=4, hidden=8, layers=1, heads=1,
                                   rng=rng)
        x = rng.normal(size=(2, 3))
        h = enc.initial_embeddings(x)
        out = enc.layer_forward(h, enc.attention_log_mask(ad.constant(np.zeros((3, 3)))), 0)
        wh = h.values @ enc.w[0][0].values
        elu = np.where(wh > 0, wh, np.exp(np.minimum(wh, 0)) - 1)
        assert np.abs(out.values[:, :3] - elu[:, :3]).max() < 1e-6

    def test_matches_independent_message_passing(self):
        rng = np.random.default_rng(9)
        enc = tg.GraphAttentionNet(real_spec(4), d_pos=4, hidden=8, layers=1, heads=2,
                                   rng=rng)
        z = rng.uniform(0, 1, size=(4, 4))
        np.fill_diagonal(z, 0)
        x = rng.normal(size=(3, 4))
        h = enc.initial_embeddings(x)
        got = enc.layer_forward(h, enc.attention_log_mask(ad.constant(z)), 0).values

        mask = np.exp(full_mask(enc, z)) - tg.MASK_EPS
        outs = []
        for k in range(2):
            alpha, wh = dense_attention_oracle(h.values, enc.w[0][k].values,
                                               enc.a_src[0][k].values,
                                               enc.a_dst[0][k].values, mask)
            outs.append(np.einsum("bij,bjd->bid", alpha, wh))
        cat = np.concatenate(outs, axis=-1)
        expected = np.where(cat > 0, cat, np.exp(np.minimum(cat, 0)) - 1)
        assert np.abs(got - expected).max() < 1e-10


class TestPredict:
    def make_learner(self, p=4, n_graphs=1, task="classification", seed=0, **kw):
        return tg.TaskLearner(real_spec(p), task=task,
                              n_classes=2 if task == "classification" else 0,
                              d_pos=4, hidden=8, layers=2, heads=2,
                              n_graphs=n_graphs, rng=np.random.default_rng(seed), **kw)

    def full_graphs(self, p, count):
        z = np.ones((p, p)) - np.eye(p)
        return [graph_of(z) for _ in range(count)]

    def test_log_probabilities_normalize(self):
        model = self.make_learner()
        out = model.predict(np.random.default_rng(0).normal(size=(6, 4)),
                            self.full_graphs(4, 1))
        assert np.abs(np.exp(out).sum(axis=1) - 1.0).max() < 1e-9

    def test_single_graph_fusion_weight_is_one(self):
        model = self.make_learner(n_graphs=2)
        x = np.random.default_rng(1).normal(size=(3, 4))
        pooled = [enc.cls_embedding(x, g)
                  for enc, g in zip(model.encoders, self.full_graphs(4, 2))]
        fused, beta = model.fused_cls(pooled[:1] * 1)
        # degenerate softmax over one class
        model2 = self.make_learner(n_graphs=2)
        fused1, beta1 = model2.fused_cls([pooled[0]])
        assert np.allclose(beta1.values, 1.0)
        assert np.allclose(fused1.values, pooled[0].values)

    def test_permuting_class_embeddings_permutes_beta_only(self):
        model = self.make_learner(n_graphs=2)
        x = np.random.default_rng(2).normal(size=(3, 4))
        pooled = [enc.cls_embedding(x, g)
                  for enc, g in zip(model.encoders, self.full_graphs(4, 2))]
        fused_ab, beta_ab = model.fused_cls(pooled)
        fused_ba, beta_ba = model.fused_cls(pooled[::-1])
        assert np.allclose(beta_ab.values, beta_ba.values[:, ::-1])
        assert np.allclose(fused_ab.values, fused_ba.values)

    def test_regression_output_shape(self):
        model = self.make_learner(task="regression")
        out = model.predict(np.random.default_rng(3).normal(size=(5, 4)),
                            self.full_graphs(4, 1))
        assert out.shape == (5,)

    def test_forward_deterministic(self):
        model = self.make_learner()
        x = np.random.default_rng(4).normal(size=(4, 4))
        g = self.full_graphs(4, 1)
        assert np.array_equal(model.predict(x, g), model.predict(x, g))

    def test_graph_count_mismatch_rejected(self):
        model = self.make_learner(n_graphs=2)
        with pytest.raises(ad.DimensionError, match="graphs"):
            model.forward(np.zeros((1, 4)), self.full_graphs(4, 1))


class TestMaskingFaithfulness:
    def test_blocked_edge_does_not_leak_into_aggregation(self):
        rng = np.random.default_rng(10)
        enc = tg.GraphAttentionNet(real_spec(4), d_pos=4, hidden=8, layers=1, heads=2,
                                   include_full_x=False, rng=rng)
        z = np.zeros((4, 4))
        z[0, 1] = 1.0          # only edge: node 1 sees node 0
        x = rng.normal(size=(2, 4))
        bumped = x.copy()
        bumped[:, 3] += 5.0    # node 3 reaches nobody

        base = enc.layer_forward(enc.initial_embeddings(x),
                                 enc.attention_log_mask(ad.constant(z)), 0).values
        moved = enc.layer_forward(enc.initial_embeddings(bumped),
                                  enc.attention_log_mask(ad.constant(z)), 0).values
        # nodes 0..2 never attend node 3; only node 3 itself (and the CLS row,
        # which attends everything) may change
        assert np.abs(moved[:, :3] - base[:, :3]).max() < 1e-7
        assert np.abs(moved[:, 3] - base[:, 3]).max() > 1e-3


class TestTaskLoss:
    def test_confident_correct_prediction_drives_loss_to_zero(self):
        logp = ad.constant(np.log(np.array([[0.999, 0.001]])))
        assert tg.task_loss(logp, np.array([0]), "classification").item() < 1e-2

    def test_uniform_binary_prediction_is_log_two(self):
        logp = ad.constant(np.log(np.full((3, 2), 0.5)))
        loss = tg.task_loss(logp, np.array([0, 1, 0]), "classification").item()
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)

    def test_perfect_regression_is_zero(self):
        pred = ad.constant(np.array([1.0, -2.0, 3.0]))
        assert tg.task_loss(pred, np.array([1.0, -2.0, 3.0]), "regression").item() == 0.0

    def test_label_out_of_range_rejected(self):
        logp = ad.constant(np.log(np.full((1, 2), 0.5)))
        with pytest.raises(DataError, match="label"):
            tg.task_loss(logp, np.array([2]), "classification")

    def test_unknown_task_rejected(self):
        with pytest.raises(ConfigError, match="task"):
            tg.task_loss(ad.constant(np.zeros((1, 2))), np.array([0]), "ranking")


def test_mixed_width_features_pad_to_uniform_block():
    spec = FeatureSpec(names=["a", "c"], kinds=["real", "categorical"],
                       levels=[None, ["u", "v", "w"]])
    enc = tg.GraphAttentionNet(spec, d_pos=2, hidden=8, layers=1, heads=2,
                               include_full_x=False, rng=np.random.default_rng(0))
    assert enc.block_width == 3
    x = np.array([[1.5, 0.0, 1.0, 0.0]])
    h = enc.initial_embeddings(x).values
    assert np.allclose(h[0, 0, :3], [1.5, 0.0, 0.0])
    assert np.allclose(h[0, 1, :3], [0.0, 1.0, 0.0])
