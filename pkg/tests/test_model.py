import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import micro
from krf import model as M
from krf import tensor as T
from krf.exceptions import DataError, ShapeError
from krf.gradcheck import grad_check
from krf.model import ModelConfig, ModelParams, decide_labels, fuse, predict_from_scores
from krf.tensor import Tensor


class TestFuse:
    def test_hand_fixture(self):
        out = fuse(Tensor([[1.0, 0.0]]), Tensor(np.eye(2)), Tensor([[1.0, 0.0], [0.0, 2.0]]))
        np.testing.assert_array_equal(out.data, [[1.0, 0.0]])

    def test_negative_review_vector_scores_zero(self):
        rng = np.random.default_rng(0)
        out = fuse(Tensor(-np.abs(rng.normal(size=(1, 4))) - 0.1), Tensor(rng.normal(size=(4, 3))),
                   Tensor(rng.normal(size=(5, 3))))
        np.testing.assert_array_equal(out.data, np.zeros((1, 5)))

    def test_forward_shape(self):
        p, A, batch, _ = micro.setup()
        assert M.forward(batch, p, A).shape == (4, 5)


class TestLoss:
    def test_zero_scores(self):
        L = M.loss(Tensor(np.zeros((3, 22))), np.eye(3, 22))
        assert L.item() == pytest.approx(22 * math.log(2), abs=1e-12)
        assert L.item() == pytest.approx(15.249, abs=1e-3)

    def test_saturation(self):
        assert M.loss(Tensor([[800.0]]), [[1.0]]).item() == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            M.loss(Tensor(np.zeros((2, 3))), np.zeros((3, 2)))

    @settings(max_examples=50)
    @given(st.integers(0, 10_000))
    def test_non_negative_and_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        S = rng.normal(scale=10, size=(6, 4))
        Y = (rng.random((6, 4)) < 0.5).astype(float)
        L = M.loss(Tensor(S), Y).item()
        assert L >= 0
        perm = rng.permutation(6)
        assert abs(M.loss(Tensor(S[perm]), Y[perm]).item() - L) < 1e-12


@pytest.mark.parametrize("ablation", ["full", "no_stat", "no_knowledge", "han_only"])
def test_full_model_gradients(ablation):
    p, A, batch, Y = micro.setup(ablation)
    rep = grad_check(lambda: M.loss(M.forward(batch, p, A), Y), dict(p.items()))
    assert set(rep.max_rel_error) == set(p.names())
    assert rep.passed, rep.summary()


class TestParams:
    def test_ablation_nesting(self):
        full = micro.setup("full")[0]
        assert micro.setup("no_stat")[0].names() == full.names()
        assert micro.setup("no_knowledge")[0].names() == full.names()
        assert micro.setup("han_only")[0].n_values() < full.n_values()
        assert "labels.L" in micro.setup("han_only")[0] and "gcn.H0" not in micro.setup("han_only")[0]

    def test_unique_registry(self):
        t = Tensor(np.zeros(2))
        with pytest.raises(ValueError):
            ModelParams({"a": t, "b": t})

    def test_load_state_mismatch(self):
        p = micro.setup()[0]
        state = p.state_dict()
        state.pop("fusion.W")
        with pytest.raises(DataError):
            p.load_state_dict(state)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(ablation="gcn_only")
        with pytest.raises(ValueError):
            ModelConfig(word_dim=0)
        assert ModelConfig.from_dict({"word_dim": 8, "unrelated": 1}).word_dim == 8

    def test_embedding_shape_checked(self):
        with pytest.raises(ShapeError):
            M.init_params(ModelConfig(word_dim=4), 10, 3, np.random.default_rng(0), embeddings=np.zeros((9, 4)))


class TestDecision:
    def test_threshold(self):
        assert decide_labels([[0.9, 0.4, 0.6]]).tolist() == [[1, 0, 1]]

    def test_top1_fallback(self):
        assert decide_labels([[0.1, 0.3, 0.2]]).tolist() == [[0, 1, 0]]

    @given(st.lists(st.integers(-200, 200), min_size=2, max_size=8, unique=True))
    def test_ranking_invariant_under_monotone_maps(self, s):
        s = np.array(s) / 10.0  # distinct after rounding through the sigmoid
        r = predict_from_scores(s).ranking
        assert predict_from_scores(T.sigmoid_array(s)).ranking == r
        assert predict_from_scores(3 * s + 1).ranking == r

    def test_named_labels(self):
        pred = predict_from_scores(np.array([2.0, -1.0, 0.5]), styles=["a", "b", "c"])
        assert pred.ranking == ["a", "c", "b"] and pred.labels == ["a", "c"]


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        p, A, batch, _ = micro.setup("full")
        before = M.forward(batch, p, A).data
        M.save_checkpoint(tmp_path / "m.ckpt", p.state_dict(), {"ablation": "full", "styles": micro.STYLES})
        tensors, cfg = M.load_checkpoint(tmp_path / "m.ckpt")
        assert cfg == {"ablation": "full", "styles": micro.STYLES}
        q, _, _, _ = micro.setup("full", seed=5)
        q.load_state_dict(tensors)
        assert M.forward(batch, q, A).data.tobytes() == before.tobytes()

    def test_layout(self, tmp_path):
        M.save_checkpoint(tmp_path / "m.ckpt", {"w": np.arange(6.0).reshape(2, 3)}, {"k": 1})
        raw = (tmp_path / "m.ckpt").read_bytes()
        assert raw.startswith(b"KRFCKPT")
        assert int.from_bytes(raw[7:11], "little") == 1
        assert raw.endswith(np.arange(6.0).astype("<f8").tobytes())

    def test_bad_magic_and_truncation(self, tmp_path):
        (tmp_path / "bad").write_bytes(b"NOTACKPT")
        with pytest.raises(DataError):
            M.load_checkpoint(tmp_path / "bad")
        M.save_checkpoint(tmp_path / "m.ckpt", {"w": np.ones((4, 4))}, {})
        raw = (tmp_path / "m.ckpt").read_bytes()
        (tmp_path / "cut").write_bytes(raw[:30])
        with pytest.raises(DataError):
            M.load_checkpoint(tmp_path / "cut")
