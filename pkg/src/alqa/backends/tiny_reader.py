"""A small from-scratch span-extraction reader backend.

Encodes the context with a tiny transformer, pools the question, and scores
each context token as span start/end via bilinear heads. Supports
inference-time dropout for uncertainty estimation.
"""

from __future__ import annotations

import copy
import json
import random
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from alqa.backends.base import ReaderBackend, register_backend


class _SpanModel(nn.Module):
    def __init__(self, vocab_size, d_model, nhead, num_layers, ffn, dropout,
                 max_positions):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, d_model)
        self.pos = nn.Embedding(max_positions, d_model)
        self.drop = nn.Dropout(dropout)
        layer = nn.TransformerEncoderLayer(d_model, nhead, ffn, dropout,
                                           batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers)
        self.q_proj = nn.Linear(d_model, d_model)
        self.start_head = nn.Linear(d_model, d_model)
        self.end_head = nn.Linear(d_model, d_model)
        self.max_positions = max_positions

    def _embed(self, ids):
        positions = torch.arange(ids.shape[1], device=ids.device)
        positions = positions.clamp(max=self.max_positions - 1)
        return self.drop(self.embed(ids) + self.pos(positions)[None, :, :])

    def span_logits(self, q_ids, ctx_ids, q_mask=None, ctx_mask=None):
        """Returns unnormalized start and end scores over context tokens."""
        q_emb = self._embed(q_ids)
        if q_mask is not None:
            q_emb = q_emb.masked_fill(q_mask[:, :, None], 0.0)
            denom = (~q_mask).sum(dim=1, keepdim=True).clamp(min=1)
        else:
            denom = torch.full((q_ids.shape[0], 1), q_ids.shape[1])
        q_vec = self.q_proj(q_emb.sum(dim=1) / denom)

        ctx_h = self.encoder(self._embed(ctx_ids), src_key_padding_mask=ctx_mask)
        start = torch.einsum("btd,bd->bt", self.start_head(ctx_h), q_vec)
        end = torch.einsum("btd,bd->bt", self.end_head(ctx_h), q_vec)
        if ctx_mask is not None:
            start = start.masked_fill(ctx_mask, float("-inf"))
            end = end.masked_fill(ctx_mask, float("-inf"))
        return start, end


@register_backend
class TinyReaderBackend(ReaderBackend):
    backend_id = "tiny-reader"

    def __init__(self, vocab_size: int, d_model: int = 48, nhead: int = 4,
                 num_layers: int = 2, ffn: int = 96, dropout: float = 0.1,
                 max_positions: int = 512, pad_id: int = 0, seed: int = 0,
                 pretrained_decay: float = 0.0):
        self.params = dict(vocab_size=vocab_size, d_model=d_model, nhead=nhead,
                           num_layers=num_layers, ffn=ffn, dropout=dropout,
                           max_positions=max_positions, pad_id=pad_id, seed=seed,
                           pretrained_decay=pretrained_decay)
        torch.manual_seed(seed)
        self.model = _SpanModel(vocab_size, d_model, nhead, num_layers, ffn,
                                dropout, max_positions)
        self.pad_id = pad_id
        self.pretrained_decay = pretrained_decay
        self.stochastic = False
        self._stoch_seed = 0
        self._optimizer = None
        self._lr = None
        self._anchor = None  # encoder weights the decay penalty pulls toward

    def set_stochastic(self, flag, seed=None):
        self.stochastic = flag
        if seed is not None:
            self._stoch_seed = seed

    def _enter_inference(self):
        if self.stochastic:
            self.model.train()
            torch.manual_seed(self._stoch_seed)
        else:
            self.model.eval()

    def span_distributions(self, question_tokens, chunk_tokens):
        self._enter_inference()
        q = torch.tensor([list(question_tokens) or [self.pad_id]], dtype=torch.long)
        ctx = torch.tensor([list(chunk_tokens)], dtype=torch.long)
        with torch.no_grad():
            start, end = self.model.span_logits(q, ctx)
        return (F.log_softmax(start[0], dim=-1).numpy(),
                F.log_softmax(end[0], dim=-1).numpy())

    # -- training -----------------------------------------------------------

    def begin_training(self, lr, total_steps, warmup_steps):
        if self.pretrained_decay > 0:
            self._anchor = {name: p.detach().clone()
                            for name, p in self.model.encoder.named_parameters()}

    def reset_optimizer(self):
        self._optimizer = None

    def _pad(self, seqs):
        width = max(1, max((len(s) for s in seqs), default=1))
        ids = torch.full((len(seqs), width), self.pad_id, dtype=torch.long)
        for i, s in enumerate(seqs):
            if s:
                ids[i, :len(s)] = torch.tensor(s, dtype=torch.long)
        return ids, ids == self.pad_id

    def train_epoch(self, features, lr, batch_size, seed):
        """features: (question_ids, chunk_ids, start_index, end_index) tuples
        with token indices relative to the chunk."""
        if self._optimizer is None or self._lr != lr:
            self._optimizer = torch.optim.Adam(self.model.parameters(), lr=lr)
            self._lr = lr
        order = list(range(len(features)))
        random.Random(seed).shuffle(order)
        self.model.train()
        torch.manual_seed(seed)
        total, count = 0.0, 0
        for i in range(0, len(order), batch_size):
            batch = [features[j] for j in order[i:i + batch_size]]
            q_ids, q_mask = self._pad([list(f[0]) for f in batch])
            ctx_ids, ctx_mask = self._pad([list(f[1]) for f in batch])
            starts = torch.tensor([f[2] for f in batch], dtype=torch.long)
            ends = torch.tensor([f[3] for f in batch], dtype=torch.long)
            s_logits, e_logits = self.model.span_logits(q_ids, ctx_ids,
                                                        q_mask, ctx_mask)
            loss = F.cross_entropy(s_logits, starts) + F.cross_entropy(e_logits, ends)
            if self._anchor is not None:
                drift = sum(((p - self._anchor[name]) ** 2).sum()
                            for name, p in self.model.encoder.named_parameters())
                loss = loss + self.pretrained_decay * drift
            self._optimizer.zero_grad()
            loss.backward()
            self._optimizer.step()
            total += float(loss.detach())
            count += 1
        return total / max(count, 1)

    # -- state --------------------------------------------------------------

    def get_state(self):
        return copy.deepcopy(self.model.state_dict())

    def set_state(self, state):
        self.model.load_state_dict(copy.deepcopy(state))

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "backend.json").write_text(json.dumps(
            {"backend_id": self.backend_id, **self.params}))
        torch.save(self.model.state_dict(), directory / "weights.pt")

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        meta = json.loads((directory / "backend.json").read_text())
        meta.pop("backend_id")
        backend = cls(**meta)
        backend.model.load_state_dict(
            torch.load(directory / "weights.pt", weights_only=True))
        return backend
