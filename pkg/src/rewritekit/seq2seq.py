"""A small from-scratch sequence-to-sequence rewriter with exact gradients.

Word-level vocabulary, shared embedding matrix, single-layer gated recurrent
encoder and decoder, and a linear output projection.  Everything runs in
64-bit floats with hand-derived analytic gradients, so finite-difference
checks can be tight.  No attention, no batching tricks: sequences are
processed one at a time and gradient accumulation order is deterministic.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from math import cos, pi
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import DatasetError, QueryRecord

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")
MAX_VOCAB = 2000
DEFAULT_HIDDEN = 64
DEFAULT_SEED = 17
INIT_SCALE = 0.08

PARAM_KEYS = (
    "embed",
    "enc_wx",
    "enc_wh",
    "enc_b",
    "dec_wx",
    "dec_wh",
    "dec_b",
    "out_w",
    "out_b",
)


@dataclass(frozen=True)
class Vocab:
    """Word-level vocabulary; ids 0..3 are PAD, BOS, EOS, UNK."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        if tuple(self.symbols[:4]) != RESERVED:
            raise ValueError(f"vocab must start with the reserved symbols {RESERVED}")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("vocab symbols must be unique")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def fingerprint(self) -> str:
        joined = "\n".join(self.symbols).encode("utf-8")
        return hashlib.sha256(joined).hexdigest()[:16]

    @classmethod
    def build(cls, texts: Iterable[str], max_size: int = MAX_VOCAB) -> "Vocab":
        """Most frequent whitespace tokens first; ties alphabetical."""
        if max_size <= len(RESERVED):
            raise ValueError("max_size leaves no room for content symbols")
        counts: dict[str, int] = {}
        for text in texts:
            for token in text.split():
                counts[token] = counts.get(token, 0) + 1
        ranked = sorted(counts, key=lambda t: (-counts[t], t))
        return cls(symbols=RESERVED + tuple(ranked[: max_size - len(RESERVED)]))

    def encode(self, text: str) -> list[int]:
        """Whitespace tokens to ids; unknown words become UNK here, not later."""
        return [self._index.get(token, UNK_ID) for token in text.split()]

    def encode_target(self, text: str) -> list[int]:
        return self.encode(text) + [EOS_ID]

    def decode(self, ids: Sequence[int]) -> str:
        words = []
        for i in ids:
            if i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            words.append(self.symbols[i])
        return " ".join(words)


def serialize_rewrite_input(record: QueryRecord) -> str:
    """Fixed input serialization so checkpoints stay portable across tools.

    History turns most recent first, each as "<q> ... <a> ...", then the
    current question after "<query>".
    """
    parts = [f"<q> {t.question} <a> {t.answer}" for t in record.history]
    parts.append(f"<query> {record.query}")
    return " ".join(parts)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max()
    return logits - (m + np.log(np.exp(logits - m).sum()))


def _softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits))


class TinySeq2Seq:
    """Parameter container plus forward/backward/generate entry points."""

    def __init__(
        self,
        vocab: Vocab,
        d: int = DEFAULT_HIDDEN,
        seed: int = DEFAULT_SEED,
        params: dict[str, np.ndarray] | None = None,
    ):
        self.vocab = vocab
        self.d = d
        self.seed = seed
        self.step = 0
        if params is None:
            rng = np.random.default_rng(seed)
            v = vocab.size
            shapes = self._shapes(v, d)
            params = {
                k: rng.uniform(-INIT_SCALE, INIT_SCALE, size=shapes[k])
                for k in PARAM_KEYS
            }
        self.params = {k: np.asarray(p, dtype=np.float64) for k, p in params.items()}
        self._validate()

    @staticmethod
    def _shapes(v: int, d: int) -> dict[str, tuple]:
        return {
            "embed": (v, d),
            "enc_wx": (d, 3 * d),
            "enc_wh": (d, 3 * d),
            "enc_b": (3 * d,),
            "dec_wx": (d, 3 * d),
            "dec_wh": (d, 3 * d),
            "dec_b": (3 * d,),
            "out_w": (d, v),
            "out_b": (v,),
        }

    def _validate(self) -> None:
        shapes = self._shapes(self.vocab.size, self.d)
        for key in PARAM_KEYS:
            if key not in self.params:
                raise ValueError(f"missing parameter {key!r}")
            if self.params[key].shape != shapes[key]:
                raise ValueError(
                    f"parameter {key!r} has shape {self.params[key].shape}, "
                    f"expected {shapes[key]}"
                )
            if not np.all(np.isfinite(self.params[key])):
                raise ValueError(f"parameter {key!r} contains non-finite values")

    def clone(self) -> "TinySeq2Seq":
        copy = TinySeq2Seq(
            self.vocab,
            d=self.d,
            seed=self.seed,
            params={k: p.copy() for k, p in self.params.items()},
        )
        copy.step = self.step
        return copy

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(p) for k, p in self.params.items()}

    def _check_ids(self, ids: Sequence[int], what: str) -> None:
        for i in ids:
            if not 0 <= i < self.vocab.size:
                raise ValueError(f"{what} token id {i} is out of vocabulary")

    # -- recurrent cell --
    # Gate layout in the (d, 3d) matrices is [update z | reset r | candidate c].
    # The reset gate scales the hidden contribution after the matmul, so the
    # cell matches the cuDNN formulation and backprop stays a clean chain.

    def _cell_forward(self, prefix: str, x: np.ndarray, h_prev: np.ndarray):
        d = self.d
        a = x @ self.params[f"{prefix}_wx"] + self.params[f"{prefix}_b"]
        g = h_prev @ self.params[f"{prefix}_wh"]
        z = _sigmoid(a[:d] + g[:d])
        r = _sigmoid(a[d : 2 * d] + g[d : 2 * d])
        c = np.tanh(a[2 * d :] + r * g[2 * d :])
        h = (1.0 - z) * h_prev + z * c
        return h, (x, h_prev, g, z, r, c)

    def _cell_backward(self, prefix: str, cache, dh: np.ndarray, grads: dict):
        d = self.d
        x, h_prev, g, z, r, c = cache
        dc = dh * z
        dz = dh * (c - h_prev)
        dh_prev = dh * (1.0 - z)
        dac = dc * (1.0 - c * c)
        dr = dac * g[2 * d :]
        dgc = dac * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        da = np.concatenate([daz, dar, dac])
        dg = np.concatenate([daz, dar, dgc])
        grads[f"{prefix}_wx"] += np.outer(x, da)
        grads[f"{prefix}_b"] += da
        grads[f"{prefix}_wh"] += np.outer(h_prev, dg)
        dx = da @ self.params[f"{prefix}_wx"].T
        dh_prev = dh_prev + dg @ self.params[f"{prefix}_wh"].T
        return dx, dh_prev

    # -- forward passes --

    def encode(self, input_ids: Sequence[int]):
        self._check_ids(input_ids, "input")
        h = np.zeros(self.d)
        caches = []
        for token in input_ids:
            x = self.params["embed"][token]
            h, cache = self._cell_forward("enc", x, h)
            caches.append((token, cache))
        return h, caches

    def _decode_steps(self, h0: np.ndarray, output_ids: Sequence[int]):
        """Teacher-forced decoder pass; inputs are BOS then the targets."""
        self._check_ids(output_ids, "output")
        h = h0
        steps = []
        inputs = [BOS_ID] + list(output_ids[:-1])
        for token_in, token_out in zip(inputs, output_ids):
            x = self.params["embed"][token_in]
            h, cache = self._cell_forward("dec", x, h)
            logits = h @ self.params["out_w"] + self.params["out_b"]
            logp = _log_softmax(logits)
            steps.append((token_in, token_out, h, cache, logp))
        return steps

    def forward(self, input_ids: Sequence[int], output_ids: Sequence[int]):
        """Teacher-forced pass returning (logprob, cache) for backward()."""
        if not output_ids:
            raise ValueError("output token sequence must be non-empty")
        h_enc, enc_caches = self.encode(input_ids)
        steps = self._decode_steps(h_enc, output_ids)
        logprob = float(sum(step[4][step[1]] for step in steps))
        cache = {"input_ids": list(input_ids), "enc_caches": enc_caches, "steps": steps}
        return logprob, cache

    def backward(
        self,
        cache,
        dlogp_coef: float = 1.0,
        grads: dict[str, np.ndarray] | None = None,
    ) -> dict[str, np.ndarray]:
        """Gradients of dlogp_coef * sequence log-probability.

        For a cross-entropy loss pass dlogp_coef = -1/N; for preference losses
        pass the loss derivative w.r.t. the sequence log-prob.  Passing an
        existing grads dict accumulates into it instead of allocating.
        """
        if grads is None:
            grads = self.zero_grads()
        dh_next = np.zeros(self.d)
        for token_in, token_out, h, cell_cache, logp in reversed(cache["steps"]):
            probs = np.exp(logp)
            dlogits = -dlogp_coef * probs
            dlogits[token_out] += dlogp_coef
            grads["out_w"] += np.outer(h, dlogits)
            grads["out_b"] += dlogits
            dh = dlogits @ self.params["out_w"].T + dh_next
            dx, dh_next = self._cell_backward("dec", cell_cache, dh, grads)
            grads["embed"][token_in] += dx
        for token, cell_cache in reversed(cache["enc_caches"]):
            dx, dh_next = self._cell_backward("enc", cell_cache, dh_next, grads)
            grads["embed"][token] += dx
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        return grads

    def generate(
        self,
        input_ids: Sequence[int],
        max_len: int = 32,
        mode: str = "greedy",
        temperature: float = 1.0,
        seed: int | None = None,
    ) -> list[int]:
        """Decode until EOS or max_len; EOS is included when emitted.

        Greedy decoding is deterministic; sampling is reproducible under a
        fixed seed.
        """
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        if mode not in ("greedy", "sample"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "sample" and temperature <= 0:
            raise ValueError("temperature must be positive")
        rng = np.random.default_rng(seed) if mode == "sample" else None
        h, _ = self.encode(input_ids)
        prev = BOS_ID
        out: list[int] = []
        for _ in range(max_len):
            x = self.params["embed"][prev]
            h, _ = self._cell_forward("dec", x, h)
            logits = h @ self.params["out_w"] + self.params["out_b"]
            if mode == "greedy":
                token = int(np.argmax(logits))
            else:
                probs = _softmax(logits / temperature)
                token = int(rng.choice(len(probs), p=probs))
            out.append(token)
            if token == EOS_ID:
                break
            prev = token
        return out

    def rewrite_text(self, text: str, max_len: int = 32) -> str:
        """Greedy rewrite of already-serialized input text."""
        return self.vocab.decode(self.generate(self.vocab.encode(text), max_len=max_len))


def sequence_logprob(model: TinySeq2Seq, input_ids: Sequence[int], output_ids: Sequence[int]) -> float:
    """Sum over steps of log softmax(logits)[target] under teacher forcing."""
    logprob, _ = model.forward(input_ids, output_ids)
    return logprob


# -- optimizer --


@dataclass
class OptimConfig:
    lr: float
    total_steps: int
    schedule: str = "constant"
    warmup_ratio: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.schedule not in ("constant", "cosine", "linear"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ValueError("warmup_ratio must be in [0, 1]")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


def lr_at(config: OptimConfig, step: int) -> float:
    """Learning rate for 0-based step; warmup ramps as (step+1)/warmup_steps."""
    warmup_steps = int(round(config.warmup_ratio * config.total_steps))
    if step < warmup_steps:
        return config.lr * (step + 1) / warmup_steps
    if config.schedule == "constant":
        return config.lr
    span = max(1, config.total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / span)
    if config.schedule == "cosine":
        return config.lr * 0.5 * (1.0 + cos(pi * progress))
    return config.lr * (1.0 - progress)


class OptimState:
    """Adam moments plus the step counter driving the schedule."""

    def __init__(self, model: TinySeq2Seq):
        self.m = model.zero_grads()
        self.v = model.zero_grads()
        self.step = 0


def adam_step(
    model: TinySeq2Seq,
    grads: dict[str, np.ndarray],
    state: OptimState,
    config: OptimConfig,
) -> TinySeq2Seq:
    """Standard Adam with bias correction; updates the model in place."""
    lr = lr_at(config, state.step)
    state.step += 1
    t = state.step
    for key in PARAM_KEYS:
        g = grads[key]
        state.m[key] = config.beta1 * state.m[key] + (1.0 - config.beta1) * g
        state.v[key] = config.beta2 * state.v[key] + (1.0 - config.beta2) * g * g
        m_hat = state.m[key] / (1.0 - config.beta1**t)
        v_hat = state.v[key] / (1.0 - config.beta2**t)
        model.params[key] -= lr * m_hat / (np.sqrt(v_hat) + config.eps)
    model.step += 1
    return model


# -- checkpointing: params.bin (raw float64 blobs) + meta.json --

_CKPT_HEADER = struct.Struct("<I")
PARAMS_FILE = "params.bin"
META_FILE = "meta.json"


def save_checkpoint(model: TinySeq2Seq, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / PARAMS_FILE).open("wb") as fh:
        fh.write(_CKPT_HEADER.pack(len(PARAM_KEYS)))
        for key in PARAM_KEYS:
            fh.write(np.ascontiguousarray(model.params[key]).tobytes(order="C"))
    meta = {
        "d": model.d,
        "seed": model.seed,
        "step": model.step,
        "vocab_hash": model.vocab.fingerprint,
        "vocab": list(model.vocab.symbols),
    }
    (directory / META_FILE).write_text(
        json.dumps(meta, ensure_ascii=False), encoding="utf-8"
    )


def load_checkpoint(directory: str | Path) -> TinySeq2Seq:
    directory = Path(directory)
    meta = json.loads((directory / META_FILE).read_text(encoding="utf-8"))
    vocab = Vocab(symbols=tuple(meta["vocab"]))
    if vocab.fingerprint != meta["vocab_hash"]:
        raise DatasetError("checkpoint vocab does not match its recorded hash")
    d = int(meta["d"])
    raw = (directory / PARAMS_FILE).read_bytes()
    n_params, = _CKPT_HEADER.unpack_from(raw)
    if n_params != len(PARAM_KEYS):
        raise DatasetError(f"checkpoint has {n_params} parameter blobs, expected {len(PARAM_KEYS)}")
    shapes = TinySeq2Seq._shapes(vocab.size, d)
    params = {}
    offset = _CKPT_HEADER.size
    for key in PARAM_KEYS:
        count = int(np.prod(shapes[key]))
        end = offset + 8 * count
        if end > len(raw):
            raise DatasetError(f"checkpoint truncated while reading parameter {key!r}")
        params[key] = (
            np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
            .reshape(shapes[key])
            .copy()
        )
        offset = end
    if offset != len(raw):
        raise DatasetError("checkpoint has trailing bytes after the last parameter")
    model = TinySeq2Seq(vocab, d=d, seed=int(meta["seed"]), params=params)
    model.step = int(meta["step"])
    return model
