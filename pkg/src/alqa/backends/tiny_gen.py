"""A small from-scratch transformer encoder-decoder generation backend.

Sized for CPU smoke runs and toy end-to-end pipelines; satisfies the same
contract a large pretrained encoder-decoder would.
"""

from __future__ import annotations

import copy
import json
import math
import random
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from alqa.backends.base import GenerationBackend, register_backend
from alqa.decoding import beam_search, sample_sequence


class _Seq2Seq(nn.Module):
    def __init__(self, vocab_size, d_model, nhead, num_layers, ffn, dropout,
                 max_positions):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, d_model)
        self.pos = nn.Embedding(max_positions, d_model)
        self.drop = nn.Dropout(dropout)
        enc_layer = nn.TransformerEncoderLayer(
            d_model, nhead, ffn, dropout, batch_first=True)
        dec_layer = nn.TransformerDecoderLayer(
            d_model, nhead, ffn, dropout, batch_first=True)
        self.encoder = nn.TransformerEncoder(enc_layer, num_layers)
        self.decoder = nn.TransformerDecoder(dec_layer, num_layers)
        self.out = nn.Linear(d_model, vocab_size)
        self.max_positions = max_positions

    def _embed(self, ids):
        positions = torch.arange(ids.shape[1], device=ids.device)
        positions = positions.clamp(max=self.max_positions - 1)
        return self.drop(self.embed(ids) + self.pos(positions)[None, :, :])

    def encode(self, src, src_pad_mask=None):
        return self.encoder(self._embed(src), src_key_padding_mask=src_pad_mask)

    def decode_logits(self, memory, tgt, memory_pad_mask=None):
        t = tgt.shape[1]
        causal = torch.triu(torch.ones(t, t, dtype=torch.bool), diagonal=1)
        h = self.decoder(self._embed(tgt), memory, tgt_mask=causal,
                         memory_key_padding_mask=memory_pad_mask)
        return self.out(h)


@register_backend
class TinyGenBackend(GenerationBackend):
    backend_id = "tiny-gen"

    def __init__(self, vocab_size: int, d_model: int = 64, nhead: int = 4,
                 num_layers: int = 2, ffn: int = 128, dropout: float = 0.1,
                 max_positions: int = 512, pad_id: int = 0, seed: int = 0):
        self.params = dict(vocab_size=vocab_size, d_model=d_model, nhead=nhead,
                           num_layers=num_layers, ffn=ffn, dropout=dropout,
                           max_positions=max_positions, pad_id=pad_id, seed=seed)
        torch.manual_seed(seed)
        self.model = _Seq2Seq(vocab_size, d_model, nhead, num_layers, ffn,
                              dropout, max_positions)
        self.pad_id = pad_id
        self.stochastic = False
        self._stoch_seed = 0
        self._optimizer = None
        self._lr = None
        self._step = 0
        self._total_steps = 0
        self._warmup_steps = 0

    # -- mode handling ------------------------------------------------------

    def set_stochastic(self, flag, seed=None):
        self.stochastic = flag
        if seed is not None:
            self._stoch_seed = seed

    def _enter_inference(self):
        """Each call under stochastic mode realizes the dropout subnet fixed
        by the pass seed, so identical calls are reproducible."""
        if self.stochastic:
            self.model.train()
            torch.manual_seed(self._stoch_seed)
        else:
            self.model.eval()

    # -- scoring ------------------------------------------------------------

    def sequence_logprobs(self, source, target):
        self._enter_inference()
        with torch.no_grad():
            return self._batch_logprobs([(source, target)])[0]

    def sequence_logprobs_batch(self, pairs):
        self._enter_inference()
        with torch.no_grad():
            return self._batch_logprobs(pairs)

    def _batch_logprobs(self, pairs):
        sources = [list(s) for s, _ in pairs]
        targets = [list(t) for _, t in pairs]
        src, src_mask = self._pad(sources)
        tgt_in, _ = self._pad([t[:-1] for t in targets])
        memory = self.model.encode(src, src_mask)
        logits = self.model.decode_logits(memory, tgt_in, src_mask)
        logprobs = F.log_softmax(logits, dim=-1)
        out = []
        for i, t in enumerate(targets):
            steps = []
            for pos in range(len(t) - 1):
                steps.append(float(logprobs[i, pos, t[pos + 1]]))
            out.append(steps)
        return out

    def _pad(self, seqs):
        width = max(1, max((len(s) for s in seqs), default=1))
        ids = torch.full((len(seqs), width), self.pad_id, dtype=torch.long)
        for i, s in enumerate(seqs):
            if s:
                ids[i, :len(s)] = torch.tensor(s, dtype=torch.long)
        return ids, ids == self.pad_id

    # -- decoding -----------------------------------------------------------

    def _step_fn(self, source, bos_token):
        src = torch.tensor([list(source)], dtype=torch.long)
        self._enter_inference()
        with torch.no_grad():
            memory = self.model.encode(src)

        def step(prefix):
            tgt = torch.tensor([[bos_token, *prefix]], dtype=torch.long)
            with torch.no_grad():
                logits = self.model.decode_logits(memory, tgt)
            return F.log_softmax(logits[0, -1], dim=-1).numpy()

        return step

    def sample(self, source, bos_token, eos_token, nucleus_p, top_k, max_len,
               seed, filter_order="topk_then_nucleus"):
        step = self._step_fn(source, bos_token)
        rng = np.random.default_rng(seed)
        return sample_sequence(step, eos_token, max_len, rng,
                               top_k=top_k, nucleus_p=nucleus_p,
                               order=filter_order)

    def beam_decode(self, source, bos_token, eos_token, beam_size, max_len):
        step = self._step_fn(source, bos_token)
        return beam_search(step, eos_token, beam_size, max_len)

    # -- training -----------------------------------------------------------

    def begin_training(self, lr, total_steps, warmup_steps):
        self._total_steps = total_steps
        self._warmup_steps = warmup_steps
        self._step = 0

    def reset_optimizer(self):
        self._optimizer = None

    def _lr_now(self, lr):
        if self._warmup_steps > 0 and self._step < self._warmup_steps:
            return lr * (self._step + 1) / self._warmup_steps
        return lr

    def train_epoch(self, pairs, lr, batch_size, seed, warmup_done=1.0):
        if self._optimizer is None or self._lr != lr:
            self._optimizer = torch.optim.Adam(self.model.parameters(), lr=lr)
            self._lr = lr
        order = list(range(len(pairs)))
        random.Random(seed).shuffle(order)
        self.model.train()
        torch.manual_seed(seed)
        total, count = 0.0, 0
        for i in range(0, len(order), batch_size):
            batch = [pairs[j] for j in order[i:i + batch_size]]
            loss = self._batch_loss(batch)
            for group in self._optimizer.param_groups:
                group["lr"] = self._lr_now(lr)
            self._optimizer.zero_grad()
            loss.backward()
            self._optimizer.step()
            self._step += 1
            total += float(loss.detach())
            count += 1
        return total / max(count, 1)

    def _batch_loss(self, batch):
        src, src_mask = self._pad([list(s) for s, _ in batch])
        targets = [list(t) for _, t in batch]
        tgt_in, _ = self._pad([t[:-1] for t in targets])
        tgt_out, _ = self._pad([t[1:] for t in targets])
        memory = self.model.encode(src, src_mask)
        logits = self.model.decode_logits(memory, tgt_in, src_mask)
        return F.cross_entropy(logits.reshape(-1, logits.shape[-1]),
                               tgt_out.reshape(-1), ignore_index=self.pad_id)

    def loss(self, pairs):
        self.model.eval()
        total, steps = 0.0, 0
        with torch.no_grad():
            for i in range(0, len(pairs), 64):
                batch = pairs[i:i + 64]
                for step_lps in self._batch_logprobs(batch):
                    total -= sum(step_lps)
                    steps += len(step_lps)
        return total / max(steps, 1)

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
