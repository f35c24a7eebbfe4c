import io

import numpy as np
import pytest

from mtsent.embed import UNK, load_vectors_text
from mtsent.errors import MissingExtraFeatures, ModelFormatError, ShapeMismatch, UnknownTask
from mtsent.layers import Mode, Tape
from mtsent.multitask import (
    MultitaskNetwork,
    NetworkConfig,
    TaskSampler,
    expected_parameter_count,
    forward,
    load_network,
    predict,
    sample_task,
    save_network,
)

from conftest import params_equal

TINY = NetworkConfig(embed_dim=4, bilstm_out=4, h1_size=3, ha_size=3, hm_size=3)
WORDS = ["good", "bad", "phone", "meh"]


def _net(config=TINY, seed=0):
    return MultitaskNetwork.create(config, WORDS, seed=seed)


def test_default_config_matches_tuned_values():
    cfg = NetworkConfig()
    assert (cfg.hm_size, cfg.dropout_hm, cfg.dropout_bilstm) == (20, 0.2, 0.2)
    assert cfg.tasks == (("fine", 5), ("ternary", 3))


def test_parameter_count_by_hand():
    # V=5 (with UNK), d=4, h=2: emb 20; lstm 2*4*(2*4+2*2+2)=112; h1 3*4+3=15; hm 3*3+3=12; heads 5*3+5 + 3*3+3=32
    net = _net()
    assert net.parameter_count() == 20 + 112 + 15 + 12 + 32
    assert net.parameter_count() == expected_parameter_count(TINY, 5)


def test_parameter_count_with_extras():
    cfg = NetworkConfig(embed_dim=4, bilstm_out=4, h1_size=3, ha_size=2, hm_size=3,
                        use_extra_features=True, extra_dim=7)
    net = _net(cfg)
    # ha 2*7+2=16, hm now 3*(3+2)+3=18 instead of 12
    assert net.parameter_count() == 20 + 112 + 15 + 16 + 18 + 32
    assert net.parameter_count() == expected_parameter_count(cfg, 5)


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(bilstm_out=5)
    with pytest.raises(ValueError):
        NetworkConfig(use_extra_features=True, extra_dim=0)
    with pytest.raises(ValueError):
        NetworkConfig(tasks=(("x", 1),))
    assert NetworkConfig.from_dict(TINY.to_dict()) == TINY


def test_vocab_starts_with_unk():
    net = _net()
    assert net.words[0] == UNK
    assert net.encode(["good", "unseen"]).tolist() == [1, 0]
    assert net.encode([]).tolist() == [0]


def test_pretrained_rows_copied():
    table = load_vectors_text(io.StringIO("good 1 2 3 4\n"))
    net = MultitaskNetwork.create(TINY, WORDS, seed=0, pretrained=table)
    assert net.embedding.value[net.vocab["good"]].tolist() == [1, 2, 3, 4]
    with pytest.raises(ShapeMismatch):
        MultitaskNetwork.create(TINY, WORDS, seed=0, pretrained=load_vectors_text(io.StringIO("good 1 2\n")))


def test_zero_heads_give_uniform():
    net = _net()
    for t in range(2):
        for p in net.head_parameters(t):
            p.value[...] = 0.0
    np.testing.assert_allclose(forward(net, ["good", "phone"], task=0), np.full(5, 0.2))
    np.testing.assert_allclose(forward(net, ["good", "phone"], task=1), np.full(3, 1 / 3))
    # a uniform distribution resolves to the lowest class
    assert predict(net, ["good"], task=0) == 0


def test_predict_argmax():
    net = _net()
    head_W, head_b = net.head_parameters(1)
    head_W.value[...] = 0.0
    head_b.value[...] = np.log([0.1, 0.2, 0.7])
    assert predict(net, ["bad"], task=1) == 2


def test_train_mode_deterministic():
    net = _net()
    a = forward(net, ["good", "bad"], mode=Mode.TRAIN, rng=np.random.default_rng(3))
    b = forward(net, ["good", "bad"], mode=Mode.TRAIN, rng=np.random.default_rng(3))
    assert np.array_equal(a, b)


def test_batched_matches_single():
    net = _net()
    id_lists = [net.encode(t) for t in (["good"], ["bad", "phone", "meh"], ["meh", "good"])]
    batched = net.predict_proba_ids(id_lists, None, 0)
    for i, ids in enumerate(id_lists):
        single = net.predict_proba_ids([ids], None, 0)[0]
        np.testing.assert_allclose(batched[i], single, rtol=1e-12, atol=1e-15)


def test_extra_features_required():
    cfg = NetworkConfig(embed_dim=4, bilstm_out=4, h1_size=3, ha_size=3, hm_size=3,
                        use_extra_features=True, extra_dim=2)
    net = _net(cfg)
    with pytest.raises(MissingExtraFeatures):
        forward(net, ["good"])
    assert forward(net, ["good"], extra=[1.0, 0.5]).shape == (5,)
    with pytest.raises(MissingExtraFeatures):
        forward(_net(), ["good"], extra=[1.0])


def test_unknown_task():
    net = _net()
    with pytest.raises(UnknownTask):
        forward(net, ["good"], task=2)
    with pytest.raises(UnknownTask):
        net.task_index("sarcasm")
    assert net.task_index(3) == 1
    assert net.task_index("fine") == 0


def test_head_gradients_isolated():
    net = _net()
    tape = Tape()
    batch = net.make_batch([net.encode(["good", "bad"]), net.encode(["meh"])])
    tape.backward(net.loss(tape, batch, [4, 0], 0, Mode.TRAIN, np.random.default_rng(0))[1])
    assert all(np.all(p.grad == 0) for p in net.head_parameters(1))
    assert any(np.any(p.grad != 0) for p in net.head_parameters(0))


class TestSampler:
    def test_always_primary(self):
        s = TaskSampler(1.0, np.random.default_rng(0))
        assert {sample_task(s) for _ in range(1000)} == {0}

    def test_frequency(self):
        s = TaskSampler(0.5, np.random.default_rng(0))
        frac = np.mean([s.sample() == 0 for _ in range(10_000)])
        assert 0.48 <= frac <= 0.52

    @pytest.mark.parametrize("seed", range(20))
    def test_epoch_fraction_bound(self, seed):
        s = TaskSampler(0.5, np.random.default_rng(seed))
        assert 0.42 <= np.mean([s.sample() == 0 for _ in range(200)]) <= 0.58

    def test_repeatable(self):
        s1, s2 = TaskSampler(0.5, np.random.default_rng(9)), TaskSampler(0.5, np.random.default_rng(9))
        assert [s1.sample() for _ in range(100)] == [s2.sample() for _ in range(100)]

    @pytest.mark.parametrize("p", [0.0, 1.5])
    def test_range(self, p):
        with pytest.raises(ValueError):
            TaskSampler(p, np.random.default_rng(0))


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        net = _net(seed=4)
        path = tmp_path / "m.bin"
        save_network(net, path, {"seed": 4})
        loaded, meta = load_network(path)
        assert meta == {"seed": 4}
        assert loaded.config == net.config
        assert loaded.words == net.words
        assert params_equal(loaded.copy_values(), net.copy_values())
        again = io.BytesIO()
        save_network(loaded, again, meta)
        assert again.getvalue() == path.read_bytes()

    def test_header(self):
        buf = io.BytesIO()
        save_network(_net(), buf)
        data = buf.getvalue()
        assert data[:4] == b"MTLS"
        assert int.from_bytes(data[4:8], "little") == 1

    def test_bad_magic(self):
        with pytest.raises(ModelFormatError):
            load_network(io.BytesIO(b"NOPE" + b"\0" * 20))

    def test_truncated(self):
        buf = io.BytesIO()
        save_network(_net(), buf)
        with pytest.raises(ModelFormatError):
            load_network(io.BytesIO(buf.getvalue()[:-3]))

    def test_trailing_bytes(self):
        buf = io.BytesIO()
        save_network(_net(), buf)
        with pytest.raises(ModelFormatError):
            load_network(io.BytesIO(buf.getvalue() + b"x"))
