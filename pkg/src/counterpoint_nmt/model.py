"""A small pre-norm Transformer encoder-decoder written against plain tensors.

Nothing from ``torch.nn``'s Transformer stack is used: attention, the head
split, positional encoding and the sublayers are all spelled out here so the
numerics can be checked piece by piece. Autograd supplies the backward pass,
and :func:`grad_check` verifies it against central differences.

Two numeric modes are supported through the ``dtype`` argument: float64 for
reference runs and oracles, float32 for training.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .config import coerce, format_kv, parse_kv
from .errors import DivergenceError, RangeError, ShapeError


@dataclass
class ModelConfig:
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 512
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    vocab_size_src: int = 8
    vocab_size_tgt: int = 8
    max_len: int = 256
    dropout_rate: float = 0.1

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads

    def validate(self) -> None:
        for f in fields(self):
            if f.name != "dropout_rate" and getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be positive")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")


# ---------------------------------------------------------------------------
# numerical building blocks


def attention(q: Tensor, k: Tensor, v: Tensor, mask: Tensor | None = None,
              return_weights: bool = False) -> Tensor | tuple[Tensor, Tensor]:
    """softmax(q k^T / sqrt(d_k)) v over the last two dimensions.

    ``mask`` is boolean and broadcastable to ``(..., n_q, n_kv)``; True marks
    a blocked position, whose score becomes -inf before the softmax.
    """
    if q.dim() < 2 or k.dim() < 2 or v.dim() < 2:
        raise ShapeError("attention inputs must be at least 2-D")
    d_k = q.shape[-1]
    if k.shape[-1] != d_k:
        raise ShapeError(f"query width {d_k} != key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"{k.shape[-2]} keys but {v.shape[-2]} values")
    scores = q @ k.transpose(-2, -1) / math.sqrt(d_k)
    if mask is not None:
        try:
            torch.broadcast_shapes(mask.shape, scores.shape)
        except RuntimeError:
            raise ShapeError(f"mask shape {tuple(mask.shape)} does not fit scores {tuple(scores.shape)}") from None
        scores = scores.masked_fill(mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    out = weights @ v
    return (out, weights) if return_weights else out


def positional_encoding(position: int, d_model: int, max_len: int | None = None,
                        dtype: torch.dtype = torch.float64) -> Tensor:
    """Sinusoid for one position: sin at even indices, cos at odd ones."""
    if position < 0 or (max_len is not None and position >= max_len):
        raise RangeError(f"position {position} outside [0, {max_len})")
    return sinusoid_table(position + 1, d_model, dtype)[position]


def sinusoid_table(length: int, d_model: int, dtype: torch.dtype = torch.float64) -> Tensor:
    pos = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    two_i = torch.arange(0, d_model, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, two_i / d_model)
    table = torch.zeros(length, d_model, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angle)
    table[:, 1::2] = torch.cos(angle[:, : d_model // 2])
    return table.to(dtype)


def _xavier(rows: int, cols: int, gen: torch.Generator, dtype: torch.dtype) -> nn.Parameter:
    bound = math.sqrt(6.0 / (rows + cols))
    w = (torch.rand(rows, cols, generator=gen, dtype=torch.float64) * 2 - 1) * bound
    return nn.Parameter(w.to(dtype))


def _zeros(n: int, dtype: torch.dtype) -> nn.Parameter:
    return nn.Parameter(torch.zeros(n, dtype=dtype))


def _ones(n: int, dtype: torch.dtype) -> nn.Parameter:
    return nn.Parameter(torch.ones(n, dtype=dtype))


class LayerNorm(nn.Module):
    def __init__(self, d: int, dtype: torch.dtype):
        super().__init__()
        self.scale = _ones(d, dtype)
        self.offset = _zeros(d, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, x.shape[-1:], self.scale, self.offset, eps=1e-6)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, gen: torch.Generator, dtype: torch.dtype):
        super().__init__()
        self.n_heads = n_heads
        self.d_k = d_model // n_heads
        self.w_q = _xavier(d_model, d_model, gen, dtype)
        self.w_k = _xavier(d_model, d_model, gen, dtype)
        self.w_v = _xavier(d_model, d_model, gen, dtype)
        self.w_o = _xavier(d_model, d_model, gen, dtype)

    def split_heads(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        return x.view(b, n, self.n_heads, self.d_k).transpose(1, 2)

    def projections(self, x_q: Tensor, x_kv: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        return (self.split_heads(x_q @ self.w_q),
                self.split_heads(x_kv @ self.w_k),
                self.split_heads(x_kv @ self.w_v))

    def forward(self, x_q: Tensor, x_kv: Tensor, mask: Tensor | None) -> Tensor:
        q, k, v = self.projections(x_q, x_kv)
        out = attention(q, k, v, mask)
        b, _, n, _ = out.shape
        return out.transpose(1, 2).reshape(b, n, -1) @ self.w_o


def self_attention_projections(x: Tensor, layer: MultiHeadAttention) -> tuple[Tensor, Tensor, Tensor]:
    """Q = x W_Q, K = x W_K, V = x W_V, each shaped (batch, heads, seq, d_k)."""
    if x.dim() != 3 or x.shape[-1] != layer.w_q.shape[0]:
        raise ShapeError(f"expected (batch, seq, {layer.w_q.shape[0]}), got {tuple(x.shape)}")
    return layer.projections(x, x)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, gen: torch.Generator, dtype: torch.dtype):
        super().__init__()
        self.w1 = _xavier(d_model, d_ff, gen, dtype)
        self.b1 = _zeros(d_ff, dtype)
        self.w2 = _xavier(d_ff, d_model, gen, dtype)
        self.b2 = _zeros(d_model, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return torch.relu(x @ self.w1 + self.b1) @ self.w2 + self.b2


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig, gen: torch.Generator, dtype: torch.dtype):
        super().__init__()
        self.norm1 = LayerNorm(cfg.d_model, dtype)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, gen, dtype)
        self.norm2 = LayerNorm(cfg.d_model, dtype)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, gen, dtype)
        self.drop = nn.Dropout(cfg.dropout_rate)

    def forward(self, x: Tensor, mask: Tensor | None) -> Tensor:
        h = self.norm1(x)
        x = x + self.drop(self.self_attn(h, h, mask))
        return x + self.drop(self.ff(self.norm2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig, gen: torch.Generator, dtype: torch.dtype):
        super().__init__()
        self.norm1 = LayerNorm(cfg.d_model, dtype)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, gen, dtype)
        self.norm2 = LayerNorm(cfg.d_model, dtype)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, gen, dtype)
        self.norm3 = LayerNorm(cfg.d_model, dtype)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, gen, dtype)
        self.drop = nn.Dropout(cfg.dropout_rate)

    def forward(self, y: Tensor, memory: Tensor, self_mask: Tensor, cross_mask: Tensor | None) -> Tensor:
        h = self.norm1(y)
        y = y + self.drop(self.self_attn(h, h, self_mask))
        y = y + self.drop(self.cross_attn(self.norm2(y), memory, cross_mask))
        return y + self.drop(self.ff(self.norm3(y)))


class Transformer(nn.Module):
    """Encoder-decoder with separate source and target vocabularies.

    Token embeddings are scaled by sqrt(d_model) before the sinusoid is added.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype: torch.dtype = torch.float32,
                 pad_id: int = 3):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.pad_id = pad_id
        self.use_positional = True
        gen = torch.Generator().manual_seed(seed)
        self.src_embed = _xavier(cfg.vocab_size_src, cfg.d_model, gen, dtype)
        self.tgt_embed = _xavier(cfg.vocab_size_tgt, cfg.d_model, gen, dtype)
        self.encoder = nn.ModuleList(EncoderLayer(cfg, gen, dtype) for _ in range(cfg.n_layers_enc))
        self.enc_norm = LayerNorm(cfg.d_model, dtype)
        self.decoder = nn.ModuleList(DecoderLayer(cfg, gen, dtype) for _ in range(cfg.n_layers_dec))
        self.dec_norm = LayerNorm(cfg.d_model, dtype)
        self.out = _xavier(cfg.d_model, cfg.vocab_size_tgt, gen, dtype)
        self.register_buffer("pe", sinusoid_table(cfg.max_len, cfg.d_model, dtype), persistent=False)
        self.drop = nn.Dropout(cfg.dropout_rate)

    @property
    def dtype(self) -> torch.dtype:
        return self.out.dtype

    def embed(self, ids: Tensor, table: Tensor) -> Tensor:
        n = ids.shape[1]
        if n > self.cfg.max_len:
            raise RangeError(f"sequence length {n} exceeds max_len {self.cfg.max_len}")
        if ids.numel() and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise RangeError(f"token id outside vocabulary of size {table.shape[0]}")
        x = table[ids] * math.sqrt(self.cfg.d_model)
        if self.use_positional:
            x = x + self.pe[:n]
        return self.drop(x)

    def encode(self, src: Tensor) -> tuple[Tensor, Tensor]:
        """Returns encoder output and the key-padding mask (batch, 1, 1, S)."""
        src_mask = (src == self.pad_id)[:, None, None, :]
        x = self.embed(src, self.src_embed)
        for layer in self.encoder:
            x = layer(x, src_mask)
        return self.enc_norm(x), src_mask

    def decode(self, tgt: Tensor, memory: Tensor, src_mask: Tensor) -> Tensor:
        n = tgt.shape[1]
        causal = torch.ones(n, n, dtype=torch.bool).triu(1)
        y = self.embed(tgt, self.tgt_embed)
        for layer in self.decoder:
            y = layer(y, memory, causal, src_mask)
        return self.dec_norm(y) @ self.out

    def forward(self, src: Tensor, tgt: Tensor) -> Tensor:
        """Logits of shape (batch, target length, target vocabulary)."""
        if src.dim() != 2 or tgt.dim() != 2 or src.shape[0] != tgt.shape[0]:
            raise ShapeError(f"bad id shapes {tuple(src.shape)} / {tuple(tgt.shape)}")
        memory, src_mask = self.encode(src)
        return self.decode(tgt, memory, src_mask)


def build_model(cfg: ModelConfig, seed: int = 0, dtype: torch.dtype = torch.float32,
                pad_id: int = 3) -> Transformer:
    return Transformer(cfg, seed=seed, dtype=dtype, pad_id=pad_id)


def forward(source_ids: Sequence[int], target_prefix_ids: Sequence[int],
            model: Transformer) -> Tensor:
    """Unbatched convenience wrapper: logits of shape (len(prefix), vocab_tgt)."""
    src = torch.tensor([list(source_ids)], dtype=torch.long)
    tgt = torch.tensor([list(target_prefix_ids)], dtype=torch.long)
    return model(src, tgt)[0]


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 32
    lr_factor: float = 1.0
    warmup: int = 4000
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9
    label_smoothing: float = 0.0
    seed: int = 0
    threads: int = 1
    precision: str = "float32"
    checkpoint_every: int = 500
    log_every: int = 50


def noam_rate(step: int, d_model: int, factor: float, warmup: int) -> float:
    """Linear warmup, then decay with the inverse square root of the step."""
    step = max(step, 1)
    return factor * d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


def make_optimizer(model: Transformer, tc: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=noam_rate(1, model.cfg.d_model, tc.lr_factor, tc.warmup),
                            betas=(tc.beta1, tc.beta2), eps=tc.adam_eps)


def make_batch(pairs: Sequence[tuple[Sequence[int], Sequence[int]]],
               pad_id: int) -> tuple[Tensor, Tensor, Tensor]:
    """Pad a list of (source ids, target ids) into (src, decoder input, labels).

    Targets include ``<s>`` and ``</s>``; the decoder sees ``tgt[:-1]`` and
    predicts ``tgt[1:]``.
    """
    if not pairs:
        raise ValueError("empty batch")
    s_len = max(len(s) for s, _ in pairs)
    t_len = max(len(t) for _, t in pairs) - 1
    src = torch.full((len(pairs), s_len), pad_id, dtype=torch.long)
    tin = torch.full((len(pairs), t_len), pad_id, dtype=torch.long)
    tout = torch.full((len(pairs), t_len), pad_id, dtype=torch.long)
    for i, (s, t) in enumerate(pairs):
        src[i, :len(s)] = torch.tensor(list(s))
        tin[i, :len(t) - 1] = torch.tensor(list(t[:-1]))
        tout[i, :len(t) - 1] = torch.tensor(list(t[1:]))
    return src, tin, tout


def loss_fn(model: Transformer, src: Tensor, tin: Tensor, tout: Tensor,
            label_smoothing: float = 0.0) -> Tensor:
    """Mean next-token cross-entropy over non-pad target positions."""
    logits = model(src, tin)
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), tout.reshape(-1),
                           ignore_index=model.pad_id, label_smoothing=label_smoothing)


def train_step(model: Transformer, optimizer: torch.optim.Optimizer,
               batch: tuple[Tensor, Tensor, Tensor], lr: float | None = None,
               label_smoothing: float = 0.0) -> float:
    """One teacher-forced update. Returns the pre-update loss."""
    model.train()
    if lr is not None:
        for group in optimizer.param_groups:
            group["lr"] = lr
    optimizer.zero_grad(set_to_none=True)
    loss = loss_fn(model, *batch, label_smoothing=label_smoothing)
    value = loss.item()
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite loss {value}")
    loss.backward()
    optimizer.step()
    return value


@torch.no_grad()
def token_accuracy(model: Transformer, batch: tuple[Tensor, Tensor, Tensor]) -> float:
    """Teacher-forced argmax accuracy over non-pad target positions."""
    model.eval()
    src, tin, tout = batch
    pred = model(src, tin).argmax(-1)
    keep = tout != model.pad_id
    return float((pred[keep] == tout[keep]).double().mean())


class Trainer:
    """Owns a model, its optimizer and the step counter; writes the TSV log."""

    def __init__(self, model: Transformer, tc: TrainConfig, log_path: str | Path | None = None):
        self.model = model
        self.tc = tc
        self.optimizer = make_optimizer(model, tc)
        self.step = 0
        self.log_path = Path(log_path) if log_path else None
        self.gen = torch.Generator().manual_seed(tc.seed)
        torch.set_num_threads(tc.threads)
        torch.manual_seed(tc.seed)

    def lr(self) -> float:
        return noam_rate(self.step + 1, self.model.cfg.d_model, self.tc.lr_factor, self.tc.warmup)

    def sample(self, data: Sequence[tuple[Sequence[int], Sequence[int]]]) -> tuple[Tensor, Tensor, Tensor]:
        n = min(self.tc.batch_size, len(data))
        idx = torch.randperm(len(data), generator=self.gen)[:n].tolist()
        return make_batch([data[i] for i in idx], self.model.pad_id)

    def fit(self, data: Sequence[tuple[Sequence[int], Sequence[int]]], steps: int,
            on_checkpoint: Callable[[Trainer], None] | None = None) -> list[float]:
        if not data:
            raise ValueError("no training data")
        losses = []
        log = open(self.log_path, "a", encoding="utf-8") if self.log_path else None
        try:
            for _ in range(steps):
                t0 = time.perf_counter()
                lr = self.lr()
                loss = train_step(self.model, self.optimizer, self.sample(data), lr,
                                  self.tc.label_smoothing)
                self.step += 1
                losses.append(loss)
                if log and (self.step % self.tc.log_every == 0 or self.step == 1):
                    wall = (time.perf_counter() - t0) * 1000
                    log.write(f"{self.step}\t{loss:.6f}\t{lr:.6g}\t{wall:.1f}\n")
                    log.flush()
                if on_checkpoint and self.tc.checkpoint_every and self.step % self.tc.checkpoint_every == 0:
                    on_checkpoint(self)
        finally:
            if log:
                log.close()
        return losses


# ---------------------------------------------------------------------------
# gradient verification


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: str
    checked: int


def grad_check(loss: Callable[[], Tensor], params: dict[str, Tensor] | Iterable[tuple[str, Tensor]],
               eps: float = 1e-5) -> GradCheckResult:
    """Compare autograd against central differences for every parameter entry.

    Relative error per entry is |a - n| / max(|a|, |n|, 1e-8); the maximum is
    returned together with the name of the offending parameter.
    """
    named = list(params.items() if isinstance(params, dict) else params)
    for _, p in named:
        p.grad = None
    loss().backward()
    analytic = {name: p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
                for name, p in named}
    worst, worst_name, checked = 0.0, "", 0
    with torch.no_grad():
        for name, p in named:
            flat = p.view(-1)
            a_flat = analytic[name].view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = loss().item()
                flat[i] = orig - eps
                down = loss().item()
                flat[i] = orig
                numeric = (up - down) / (2 * eps)
                a = a_flat[i].item()
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                checked += 1
                if rel > worst:
                    worst, worst_name = rel, f"{name}[{i}]"
    return GradCheckResult(worst, worst_name, checked)


def grad_check_model(model: Transformer, batch: tuple[Tensor, Tensor, Tensor],
                     eps: float = 1e-5) -> GradCheckResult:
    """Gradient check of the full model loss; requires float64 and no dropout."""
    if model.dtype != torch.float64:
        raise ValueError("gradient checks need a float64 model")
    model.eval()
    return grad_check(lambda: loss_fn(model, *batch), dict(model.named_parameters()), eps)


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = b"CPNMTCK\x00"
VERSION = 1


def save_checkpoint(path: str | Path, model: Transformer, meta: dict[str, object] | None = None,
                    optimizer: torch.optim.Optimizer | None = None, step: int = 0) -> None:
    """Binary container: magic, version, key=value header, named float32 tensors.

    ``meta`` entries (variant, vocabularies, ...) go into the header next to
    the model configuration. Adam moments are appended when ``optimizer`` is
    given so that training can resume.
    """
    header = {f"model.{k}": v for k, v in asdict(model.cfg).items()}
    header["step"] = step
    header["pad_id"] = model.pad_id
    for k, v in (meta or {}).items():
        header[f"meta.{k}"] = v
    tensors = list(model.named_parameters())
    if optimizer is not None:
        name_of = {id(p): n for n, p in model.named_parameters()}
        for group in optimizer.param_groups:
            for p in group["params"]:
                state = optimizer.state.get(p)
                if not state:
                    continue
                n = name_of[id(p)]
                tensors.append((f"adam.exp_avg.{n}", state["exp_avg"]))
                tensors.append((f"adam.exp_avg_sq.{n}", state["exp_avg_sq"]))
                header[f"adam_step.{n}"] = int(state["step"])
    text = format_kv(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(text)))
        fh.write(text)
        fh.write(struct.pack("<I", len(tensors)))
        for name, t in tensors:
            raw = name.encode("utf-8")
            data = t.detach().to(torch.float32).contiguous()
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<B", data.dim()) + struct.pack(f"<{data.dim()}I", *data.shape))
            fh.write(data.numpy().astype("<f4").tobytes())


@dataclass
class Checkpoint:
    model: Transformer
    meta: dict[str, str]
    step: int
    adam_state: dict[str, tuple[Tensor, Tensor, int]]

    def restore_optimizer(self, optimizer: torch.optim.Optimizer) -> None:
        by_name = dict(self.model.named_parameters())
        for name, (m, v, step) in self.adam_state.items():
            p = by_name[name]
            optimizer.state[p] = {"step": torch.tensor(float(step)), "exp_avg": m.to(p.dtype).clone(),
                                  "exp_avg_sq": v.to(p.dtype).clone()}


def load_checkpoint(path: str | Path, dtype: torch.dtype = torch.float32) -> Checkpoint:

    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    pos = len(MAGIC)
    version, hlen = struct.unpack_from("<II", blob, pos)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos += 8
    header = parse_kv(blob[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    defaults = ModelConfig()
    cfg = ModelConfig(**{f.name: coerce(header[f"model.{f.name}"], getattr(defaults, f.name))
                         for f in fields(ModelConfig)})
    model = Transformer(cfg, dtype=dtype, pad_id=int(header.get("pad_id", 3)))
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
        tensors[name] = torch.from_numpy(arr.astype(np.float32))
    with torch.no_grad():
        for name, p in model.named_parameters():
            if tensors[name].shape != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {tuple(tensors[name].shape)} != {tuple(p.shape)}")
            p.copy_(tensors[name].to(dtype))
    adam = {}
    for key, value in header.items():
        if key.startswith("adam_step."):
            n = key[len("adam_step."):]
            adam[n] = (tensors[f"adam.exp_avg.{n}"], tensors[f"adam.exp_avg_sq.{n}"], int(value))
    meta = {k[5:]: v for k, v in header.items() if k.startswith("meta.")}
    return Checkpoint(model, meta, int(header.get("step", 0)), adam)
