"""Seeded random gradient-check instances, one builder per layer."""

import numpy as np

from mtsent import layers as L
from mtsent.layers import DropoutSpec, LSTMCellParams, Mode, Parameter
from mtsent.linear import Strategy, objective, objective_grad
from mtsent.multitask import MultitaskNetwork, NetworkConfig

from helpers import numeric_grad, rel_error, tape_grad_error


def _p(name, rng, *shape):
    return Parameter(name, rng.normal(size=shape))


def _proj(rng, shape):
    return rng.normal(size=shape)


def case_dense_tanh(seed):
    rng = np.random.default_rng(seed)
    B, n_in, n_out = rng.integers(1, 5), rng.integers(1, 9), rng.integers(1, 9)
    x, W, b = _p("x", rng, B, n_in), _p("W", rng, n_out, n_in), _p("b", rng, 1, n_out)
    w = _proj(rng, (B, n_out))
    return tape_grad_error(lambda t: L.total(t, L.dense_tanh_forward(t, t.leaf(x), t.leaf(W), t.leaf(b)), w),
                           [x, W, b])


def case_elementwise(seed):
    rng = np.random.default_rng(seed)
    B, d = rng.integers(1, 5), rng.integers(1, 9)
    a, b, c = _p("a", rng, B, d), _p("b", rng, B, d), _p("c", rng, B, 3)
    mask = (rng.random((B, 1)) < 0.5).astype(float)
    w = _proj(rng, (B, d + 3))

    def build(t):
        s = L.sigmoid(t, L.mul(t, t.leaf(a), t.leaf(b)))
        y = L.blend(t, L.tanh(t, L.add(t, s, t.leaf(a))), t.leaf(b), mask)
        return L.total(t, L.concat(t, [y, t.leaf(c)]), w)

    return tape_grad_error(build, [a, b, c])


def case_lookup(seed):
    rng = np.random.default_rng(seed)
    V, d, B = rng.integers(2, 9), rng.integers(1, 9), rng.integers(1, 8)
    table = _p("emb", rng, V, d)
    ids = rng.integers(0, V, size=B)  # repeats exercise the scatter-add
    w = _proj(rng, (B, d))
    return tape_grad_error(lambda t: L.total(t, L.tanh(t, L.lookup(t, table, ids)), w), [table])


def case_dropout(seed):
    rng = np.random.default_rng(seed)
    B, d = rng.integers(1, 5), rng.integers(1, 9)
    x = _p("x", rng, B, d)
    w = _proj(rng, (B, d))
    spec = DropoutSpec(0.3, Mode.TRAIN)
    return tape_grad_error(
        lambda t: L.total(t, L.dropout(t, L.tanh(t, t.leaf(x)), spec, np.random.default_rng(seed)), w), [x])


def case_softmax_xent(seed):
    rng = np.random.default_rng(seed)
    B, K = rng.integers(1, 6), rng.integers(2, 9)
    z = _p("z", rng, B, K)
    y = rng.integers(0, K, size=B)
    weights = rng.uniform(0.2, 3.0, size=B)
    return tape_grad_error(lambda t: L.softmax_xent(t, t.leaf(z), y, weights)[1], [z])


def _cell(prefix, rng, n_in, h):
    cell = LSTMCellParams.create(prefix, n_in, h, lambda name, r, c: rng.normal(scale=0.7, size=(r, c)))
    for p in cell.b.values():
        p.value[...] = rng.normal(scale=0.5, size=p.shape)
    return cell


def case_lstm_step(seed):
    rng = np.random.default_rng(seed)
    B, n_in, h = rng.integers(1, 4), rng.integers(1, 9), rng.integers(1, 9)
    cell = _cell("cell", rng, n_in, h)
    x, h0, c0 = _p("x", rng, B, n_in), _p("h", rng, B, h), _p("c", rng, B, h)
    wh, wc = _proj(rng, (B, h)), _proj(rng, (B, h))

    def build(t):
        h1, c1 = L.lstm_step(t, t.leaf(x), t.leaf(h0), t.leaf(c0), cell)
        return L.add(t, L.total(t, h1, wh), L.total(t, c1, wc))

    return tape_grad_error(build, [x, h0, c0, *cell.parameters()])


def case_bilstm(seed, coords=4):
    rng = np.random.default_rng(seed)
    B, T, n_in, h = rng.integers(1, 4), rng.integers(1, 6), rng.integers(1, 9), rng.integers(1, 5)
    fwd, bwd = _cell("fwd", rng, n_in, h), _cell("bwd", rng, n_in, h)
    lengths = rng.integers(1, T + 1, size=B)
    lengths[0] = T
    # every (step, example) gets its own input row, gathered for both directions
    table = _p("x", rng, T * B, n_in)
    fwd_ids = np.zeros((T, B), dtype=np.int64)
    bwd_ids = np.zeros((T, B), dtype=np.int64)
    for b in range(B):
        own = [s * B + b for s in range(lengths[b])]
        fwd_ids[: lengths[b], b] = own
        bwd_ids[: lengths[b], b] = own[::-1]
    masks = [(t < lengths).astype(float)[:, None] for t in range(T)]
    w = _proj(rng, (B, 2 * h))

    def build(t):
        fx = [L.lookup(t, table, fwd_ids[s]) for s in range(T)]
        bx = [L.lookup(t, table, bwd_ids[s]) for s in range(T)]
        return L.total(t, L.bilstm_encode(t, fx, fwd, bwd, bx, masks), w)

    return tape_grad_error(build, [table, *fwd.parameters(), *bwd.parameters()], coords=coords, rng=rng)


def _tiny_network(seed, extra=True):
    cfg = NetworkConfig(embed_dim=4, bilstm_out=4, h1_size=3, ha_size=3, hm_size=3,
                        use_extra_features=extra, extra_dim=2 if extra else 0)
    return MultitaskNetwork.create(cfg, ["a", "b", "c", "d", "e"], seed=seed)


def case_network(seed, coords=3):
    rng = np.random.default_rng(seed)
    net = _tiny_network(seed)
    B = int(rng.integers(1, 4))
    ids = [rng.integers(0, len(net.words), size=rng.integers(1, 6)) for _ in range(B)]
    extras = rng.normal(size=(B, 2))
    task = int(rng.integers(0, 2))
    y = rng.integers(0, net.config.tasks[task][1], size=B)
    batch = net.make_batch(ids, extras)

    def build(t):
        return net.loss(t, batch, y, task, Mode.TRAIN, np.random.default_rng(seed))[1]

    params = [p for p in net.parameters()
              if not p.name.startswith("head.") or p in net.head_parameters(task)]
    return tape_grad_error(build, params, coords=coords, rng=rng)


def case_linear(seed, strategy):
    rng = np.random.default_rng(seed)
    n, d, K = rng.integers(2, 9), rng.integers(1, 9), rng.integers(2, 6)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, K, size=n)
    sw = rng.uniform(0.5, 2.0, size=n)
    W, b = rng.normal(size=(K, d)), rng.normal(size=K)
    C = float(10.0 ** rng.integers(-2, 3))
    gW, gb = objective_grad(strategy, W, b, X, y, sw, C)
    nW = numeric_grad(lambda: objective(strategy, W, b, X, y, sw, C), W)
    nb = numeric_grad(lambda: objective(strategy, W, b, X, y, sw, C), b)
    return rel_error(np.concatenate([gW.ravel(), gb]), np.concatenate([nW.ravel(), nb]))


LAYER_CASES = {
    "dense_tanh": case_dense_tanh,
    "elementwise": case_elementwise,
    "lookup": case_lookup,
    "dropout": case_dropout,
    "softmax_xent": case_softmax_xent,
    "lstm_step": case_lstm_step,
    "bilstm": case_bilstm,
    "network": case_network,
    "lr-ovr": lambda s: case_linear(s, Strategy.OVR_LOGISTIC),
    "maxent": lambda s: case_linear(s, Strategy.MULTINOMIAL),
}
