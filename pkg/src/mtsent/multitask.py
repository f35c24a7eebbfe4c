"""The shared biLSTM network with one softmax head per task.

Wiring: embeddings -> biLSTM -> H1 layers; extra features -> HA layers;
[H1 ; HA] -> HM -> softmax head of the selected task. Everything up to
and including HM is shared between tasks.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import layers as L
from .embed import UNK, EmbeddingTable, build_trainable_table
from .errors import MissingExtraFeatures, ModelFormatError, ShapeMismatch, UnknownTask
from .layers import DropoutSpec, LSTMCellParams, Mode, Parameter, Tape
from .optim import STREAM_INIT, glorot_uniform, rng_for

DEFAULT_TASKS = (("fine", 5), ("ternary", 3))


@dataclass
class NetworkConfig:
    embed_dim: int = 50
    bilstm_out: int = 50
    h1_size: int = 50
    ha_size: int = 50
    hm_size: int = 20
    h1_layers: int = 1
    ha_layers: int = 1
    dropout_bilstm: float = 0.2
    dropout_h1: float = 0.2
    dropout_ha: float = 0.2
    dropout_hm: float = 0.2
    tasks: tuple = DEFAULT_TASKS
    use_extra_features: bool = False
    extra_dim: int = 0

    def __post_init__(self):
        self.tasks = tuple((str(n), int(k)) for n, k in self.tasks)
        if not self.tasks:
            raise ValueError("at least one task is required")
        for name, k in self.tasks:
            if k < 2:
                raise ValueError(f"task {name!r} needs at least 2 classes")
        if self.bilstm_out % 2:
            raise ValueError("bilstm_out must be even (two directions of bilstm_out/2)")
        if self.use_extra_features and self.extra_dim < 1:
            raise ValueError("use_extra_features requires extra_dim >= 1")
        for r in (self.dropout_bilstm, self.dropout_h1, self.dropout_ha, self.dropout_hm):
            DropoutSpec(r)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tasks"] = [list(t) for t in self.tasks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)

    def with_tasks(self, tasks) -> "NetworkConfig":
        d = self.to_dict()
        d["tasks"] = tasks
        return NetworkConfig.from_dict(d)


def expected_parameter_count(config: NetworkConfig, vocab_size: int) -> int:
    d, h = config.embed_dim, config.bilstm_out // 2
    count = vocab_size * d
    count += 2 * 4 * (h * d + h * h + h)
    width = config.bilstm_out
    for _ in range(config.h1_layers):
        count += config.h1_size * width + config.h1_size
        width = config.h1_size
    merged = config.h1_size
    if config.use_extra_features:
        width = config.extra_dim
        for _ in range(config.ha_layers):
            count += config.ha_size * width + config.ha_size
            width = config.ha_size
        merged += config.ha_size
    count += config.hm_size * merged + config.hm_size
    for _, k in config.tasks:
        count += k * config.hm_size + k
    return count


class TaskSampler:
    """Picks the task of each batch: task 0 with probability ``p_M``.

    With more than two tasks the remaining mass is split evenly, which
    coincides with the Bernoulli draw when there are exactly two.
    """

    def __init__(self, p_M: float, rng: np.random.Generator, n_tasks: int = 2):
        if not 0.0 < p_M <= 1.0:
            raise ValueError("p_M must lie in (0, 1]")
        self.p_M = p_M
        self.rng = rng
        self.n_tasks = n_tasks

    def sample(self) -> int:
        u = self.rng.random()
        if u < self.p_M:
            return 0
        if self.n_tasks == 2:
            return 1
        rest = (u - self.p_M) / (1.0 - self.p_M)
        return 1 + min(int(rest * (self.n_tasks - 1)), self.n_tasks - 2)


def sample_task(sampler: TaskSampler) -> int:
    return sampler.sample()


@dataclass
class Batch:
    fwd_ids: np.ndarray  # (T, B)
    bwd_ids: np.ndarray  # (T, B), each column reversed within its own length
    masks: list  # T arrays of shape (B, 1)
    lengths: np.ndarray
    extras: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.lengths)


@dataclass
class Activations:
    """Intermediate values of one forward pass, for inspection."""

    bilstm: L.Var | None = None
    h1: L.Var | None = None
    ha: L.Var | None = None
    hm: L.Var | None = None
    logits: L.Var | None = None
    extra: dict = field(default_factory=dict)


class MultitaskNetwork:
    def __init__(self, config: NetworkConfig, vocab: Sequence[str], params: dict[str, Parameter]):
        self.config = config
        self.words = list(vocab)
        if not self.words or self.words[0] != UNK:
            raise ValueError(f"vocabulary must start with {UNK!r}")
        self.vocab = {w: i for i, w in enumerate(self.words)}
        self.params = params
        h = config.bilstm_out // 2
        self.embedding = params["embedding"]
        self.lstm = {}
        for direction in ("fwd", "bwd"):
            W = {g: params[f"lstm_{direction}.W_{g}"] for g in L.GATES}
            U = {g: params[f"lstm_{direction}.U_{g}"] for g in L.GATES}
            b = {g: params[f"lstm_{direction}.b_{g}"] for g in L.GATES}
            self.lstm[direction] = LSTMCellParams(W, U, b)
        if self.embedding.shape != (len(self.words), config.embed_dim):
            raise ShapeMismatch("embedding table does not match vocabulary and embed_dim")
        if self.lstm["fwd"].hidden != h:
            raise ShapeMismatch("LSTM hidden size does not match bilstm_out / 2")

    # -- construction ----------------------------------------------------

    @classmethod
    def create(cls, config: NetworkConfig, vocab_words: Sequence[str], seed: int,
               pretrained: EmbeddingTable | None = None) -> "MultitaskNetwork":
        """Glorot-initialised network; every parameter draws from its own seeded stream."""
        words = [UNK] + [w for w in dict.fromkeys(vocab_words) if w != UNK]
        if pretrained is not None and pretrained.dim != config.embed_dim:
            raise ShapeMismatch(f"pretrained vectors have dim {pretrained.dim}, config says {config.embed_dim}")

        def init(name, rows, cols):
            return glorot_uniform(cols, rows, rng_for(seed, STREAM_INIT, name))

        params: dict[str, Parameter] = {}
        table = build_trainable_table(words, pretrained, rng_for(seed, STREAM_INIT, "embedding"),
                                      dim=config.embed_dim)
        params["embedding"] = Parameter("embedding", table.matrix)
        h = config.bilstm_out // 2
        for direction in ("fwd", "bwd"):
            cell = LSTMCellParams.create(f"lstm_{direction}", config.embed_dim, h, init)
            for p in cell.parameters():
                params[p.name] = p

        def dense(name, n_in, n_out, weight_init=init):
            params[f"{name}.W"] = Parameter(f"{name}.W", weight_init(f"{name}.W", n_out, n_in))
            params[f"{name}.b"] = Parameter(f"{name}.b", np.zeros((1, n_out)))

        width = config.bilstm_out
        for i in range(config.h1_layers):
            dense(f"h1.{i}", width, config.h1_size)
            width = config.h1_size
        merged = config.h1_size
        if config.use_extra_features:
            width = config.extra_dim
            for i in range(config.ha_layers):
                dense(f"ha.{i}", width, config.ha_size)
                width = config.ha_size
            merged += config.ha_size
        dense("hm", merged, config.hm_size)
        for name, k in config.tasks:
            dense(f"head.{name}", config.hm_size, k)
        return cls(config, words, params)

    # -- parameter views -------------------------------------------------

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def head_parameters(self, task: int) -> list[Parameter]:
        name = self.config.tasks[task][0]
        return [self.params[f"head.{name}.W"], self.params[f"head.{name}.b"]]

    def shared_parameters(self) -> list[Parameter]:
        heads = {id(p) for t in range(self.config.n_tasks) for p in self.head_parameters(t)}
        return [p for p in self.params.values() if id(p) not in heads]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.params.items()}

    def task_index(self, name_or_classes) -> int:
        for i, (name, k) in enumerate(self.config.tasks):
            if name == name_or_classes or k == name_or_classes:
                return i
        raise UnknownTask(f"no task head matches {name_or_classes!r}")

    # -- encoding --------------------------------------------------------

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        """Token ids; unknown words map to the UNK row and an empty tweet to a single UNK."""
        ids = [self.vocab.get(t, 0) for t in tokens]
        return np.array(ids or [0], dtype=np.int64)

    def make_batch(self, id_lists: Sequence[np.ndarray], extras=None) -> Batch:
        lengths = np.array([len(x) for x in id_lists], dtype=np.int64)
        if lengths.min(initial=1) < 1:
            raise L.EmptySequence("every example needs at least one token id")
        T, B = int(lengths.max()), len(id_lists)
        fwd = np.zeros((T, B), dtype=np.int64)
        bwd = np.zeros((T, B), dtype=np.int64)
        for b, ids in enumerate(id_lists):
            n = len(ids)
            fwd[:n, b] = ids
            bwd[:n, b] = ids[::-1]
        steps = np.arange(T)[:, None]
        mask = (steps < lengths[None, :]).astype(np.float64)
        masks = [mask[t][:, None] for t in range(T)]
        if extras is not None:
            extras = np.asarray(extras, dtype=np.float64).reshape(B, -1)
        return Batch(fwd, bwd, masks, lengths, extras)

    # -- forward ---------------------------------------------------------

    def _dropout(self, tape, x, rate, mode, rng):
        return L.dropout(tape, x, DropoutSpec(rate, mode), rng)

    def trunk(self, tape: Tape, batch: Batch, mode: Mode, rng=None, acts: Activations | None = None) -> L.Var:
        """Shared part of the network, returning the HM output."""
        cfg = self.config
        if cfg.use_extra_features and batch.extras is None:
            raise MissingExtraFeatures("network expects additional features")
        if batch.extras is not None and not cfg.use_extra_features:
            raise MissingExtraFeatures("network was built without additional features")
        if mode is Mode.TRAIN and rng is None:
            rng = np.random.default_rng(0)
        xs = [L.lookup(tape, self.embedding, batch.fwd_ids[t]) for t in range(batch.fwd_ids.shape[0])]
        xs_b = [L.lookup(tape, self.embedding, batch.bwd_ids[t]) for t in range(batch.bwd_ids.shape[0])]
        enc = L.bilstm_encode(tape, xs, self.lstm["fwd"], self.lstm["bwd"], xs_b, batch.masks)
        enc = self._dropout(tape, enc, cfg.dropout_bilstm, mode, rng)
        h = enc
        for i in range(cfg.h1_layers):
            h = L.dense_tanh_forward(tape, h, tape.leaf(self.params[f"h1.{i}.W"]), tape.leaf(self.params[f"h1.{i}.b"]))
            h = self._dropout(tape, h, cfg.dropout_h1, mode, rng)
        merged = h
        a = None
        if cfg.use_extra_features:
            if batch.extras.shape[1] != cfg.extra_dim:
                raise ShapeMismatch(f"expected {cfg.extra_dim} extra features, got {batch.extras.shape[1]}")
            a = tape.const(batch.extras)
            for i in range(cfg.ha_layers):
                a = L.dense_tanh_forward(tape, a, tape.leaf(self.params[f"ha.{i}.W"]), tape.leaf(self.params[f"ha.{i}.b"]))
                a = self._dropout(tape, a, cfg.dropout_ha, mode, rng)
            merged = L.concat(tape, [h, a])
        hm = L.dense_tanh_forward(tape, merged, tape.leaf(self.params["hm.W"]), tape.leaf(self.params["hm.b"]))
        hm = self._dropout(tape, hm, cfg.dropout_hm, mode, rng)
        if acts is not None:
            acts.bilstm, acts.h1, acts.ha, acts.hm = enc, h, a, hm
        return hm

    def logits(self, tape: Tape, batch: Batch, task: int, mode: Mode, rng=None,
               acts: Activations | None = None) -> L.Var:
        if not 0 <= task < self.config.n_tasks:
            raise UnknownTask(f"task {task} not in 0..{self.config.n_tasks - 1}")
        hm = self.trunk(tape, batch, mode, rng, acts)
        W, b = self.head_parameters(task)
        out = L.dense_forward(tape, hm, tape.leaf(W), tape.leaf(b))
        if acts is not None:
            acts.logits = out
        return out

    def loss(self, tape: Tape, batch: Batch, labels, task: int, mode: Mode, rng=None, weights=None):
        return L.softmax_xent(tape, self.logits(tape, batch, task, mode, rng), labels, weights)

    def predict_proba_ids(self, id_lists, extras, task: int, batch_size: int = 512) -> np.ndarray:
        out = []
        for start in range(0, len(id_lists), batch_size):
            stop = start + batch_size
            batch = self.make_batch(id_lists[start:stop], None if extras is None else extras[start:stop])
            out.append(L.softmax(self.logits(Tape(), batch, task, Mode.EVAL).value))
        k = self.config.tasks[task][1]
        return np.concatenate(out) if out else np.zeros((0, k))

    def predict_ids(self, id_lists, extras, task: int) -> np.ndarray:
        # argmax returns the first maximum: ties go to the lower ordinal class
        return np.argmax(self.predict_proba_ids(id_lists, extras, task), axis=1)


def _extra_batch(network, extra):
    if extra is None:
        return None
    values = getattr(extra, "values", extra)
    return np.asarray(values, dtype=np.float64).reshape(1, -1)


def forward(network: MultitaskNetwork, tokens: Sequence[str], extra=None, task: int = 0,
            mode: Mode = Mode.EVAL, rng=None) -> np.ndarray:
    """Class probabilities of one tweet under the ``task`` head."""
    if network.config.use_extra_features and extra is None:
        raise MissingExtraFeatures("network expects additional features")
    batch = network.make_batch([network.encode(tokens)], _extra_batch(network, extra))
    return L.softmax(network.logits(Tape(), batch, task, mode, rng).value)[0]


def predict(network: MultitaskNetwork, tokens: Sequence[str], extra=None, task: int = 0) -> int:
    return int(np.argmax(forward(network, tokens, extra, task, Mode.EVAL)))


# -- persistence -----------------------------------------------------------

MAGIC = b"MTLS"
FORMAT_VERSION = 1


def save_network(network: MultitaskNetwork, path_or_stream, extra_meta: dict | None = None) -> None:
    """Binary model file: magic, version, JSON header, then each named parameter.

    All integers are little-endian u32; values are little-endian float64
    in row-major order.
    """
    meta = {"network": network.config.to_dict(), "vocab": network.words,
            "parameters": list(network.params), "meta": extra_meta or {}}
    blob = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for name, p in network.params.items():
        raw = name.encode("utf-8")
        rows, cols = p.shape
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<II", rows, cols))
        buf.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    data = buf.getvalue()
    if hasattr(path_or_stream, "write"):
        path_or_stream.write(data)
    else:
        with open(path_or_stream, "wb") as fh:
            fh.write(data)


def _read(stream, n):
    data = stream.read(n)
    if len(data) != n:
        raise ModelFormatError("truncated model file")
    return data


def load_network(path_or_stream) -> tuple[MultitaskNetwork, dict]:
    if hasattr(path_or_stream, "read"):
        stream = path_or_stream
    else:
        with open(path_or_stream, "rb") as fh:
            stream = io.BytesIO(fh.read())
    if _read(stream, 4) != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    (version,) = struct.unpack("<I", _read(stream, 4))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    (blob_len,) = struct.unpack("<I", _read(stream, 4))
    meta = json.loads(_read(stream, blob_len).decode("utf-8"))
    config = NetworkConfig.from_dict(meta["network"])
    reference = MultitaskNetwork.create(config, meta["vocab"][1:], seed=0)
    params = {}
    for expected in meta["parameters"]:
        (n,) = struct.unpack("<I", _read(stream, 4))
        name = _read(stream, n).decode("utf-8")
        if name != expected:
            raise ModelFormatError(f"parameter {name!r} found where {expected!r} was expected")
        rows, cols = struct.unpack("<II", _read(stream, 8))
        ref = reference.params.get(name)
        if ref is None or ref.shape != (rows, cols):
            raise ModelFormatError(f"parameter {name!r} has shape {(rows, cols)}, inconsistent with config")
        values = np.frombuffer(_read(stream, rows * cols * 8), dtype="<f8").reshape(rows, cols)
        params[name] = Parameter(name, values.astype(np.float64))
    if set(params) != set(reference.params):
        raise ModelFormatError("model file parameters do not match its config")
    if stream.read(1):
        raise ModelFormatError("trailing bytes after last parameter")
    return MultitaskNetwork(config, meta["vocab"], params), meta.get("meta", {})
