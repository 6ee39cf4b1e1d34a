"""Trace extraction from causal language models.

Two procedures, both writing the typlab NDJSON trace format:

  * generate - sample a continuation with top-k sampling, recording each
    step's renormalized top-k distribution and the chosen token.
  * score    - walk an existing text; when the actual next token is missing
    from the top-k list, the lowest-probability entry is replaced by the
    actual token with its model probability before renormalizing, so the
    chosen token is always inside the recorded support.

All probabilities are renormalized in float64 and floored at 1e-10 (with the
remaining mass rescaled), matching the trace format's distribution
invariants, so emitted files pass the consuming reader's validation
byte-for-byte. Prompt tokens never contribute steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO

import numpy as np
import torch

from .config import ModelLoadFailure, ProbeConfig, ProbeError, TokenizationMismatch

PROB_FLOOR = 1e-10


@dataclass
class ProbeResult:
    output_path: str
    steps: int
    prompt_token_count: int
    token_ids: list[int]
    stalled: bool = False


def _load_model(model_id: str):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModelForCausalLM.from_pretrained(model_id)
    except Exception as exc:
        raise ModelLoadFailure(f"cannot load {model_id!r}: {exc}") from exc
    model.eval()
    return model, tokenizer


def _model_label(config: ProbeConfig) -> str:
    if config.temperature == 1.0:
        return config.model
    return f"{config.model}|temperature={config.temperature!r}"


def _floor_renormalize(probs: np.ndarray) -> np.ndarray:
    """Clamp entries below the floor and rescale the rest until all clear it."""
    out = probs / probs.sum()
    floored = np.zeros(len(out), dtype=bool)
    while True:
        low = (out < PROB_FLOOR) & ~floored
        if not low.any():
            return out
        floored |= low
        head = 1.0 - PROB_FLOOR * int(floored.sum())
        if head <= 0:
            raise ProbeError("support too large for the probability floor")
        rest = ~floored
        out[rest] *= head / out[rest].sum()
        out[floored] = PROB_FLOOR


def _write_header(sink: IO[bytes], config: ProbeConfig, source_kind: str,
                  prompt_tokens: int, vocab_size: int, seed: int | None) -> None:
    record = {
        "type": "header",
        "version": 1,
        "source_kind": source_kind,
        "model_label": _model_label(config),
        "top_k": config.top_k,
        "seed": seed,
        "prompt_token_count": prompt_tokens,
        "alphabet_size": vocab_size,
    }
    sink.write(json.dumps(record, separators=(",", ":")).encode())
    sink.write(b"\n")


def _write_step(sink: IO[bytes], index: int, chosen_id: int, ids: np.ndarray,
                probs: np.ndarray) -> float:
    order = np.argsort(ids)
    ids = ids[order]
    probs = probs[order]
    chosen_prob = float(probs[np.searchsorted(ids, chosen_id)])
    record = {
        "type": "step",
        "index": index,
        "chosen_id": int(chosen_id),
        "chosen_prob": chosen_prob,
        "ids": [int(i) for i in ids],
        "probs": [float(p) for p in probs],
    }
    sink.write(json.dumps(record, separators=(",", ":")).encode())
    sink.write(b"\n")
    return chosen_prob


def _next_probs(logits: torch.Tensor, temperature: float) -> np.ndarray:
    scaled = logits.double()
    if temperature != 1.0:
        scaled = scaled / temperature
    return torch.softmax(scaled, dim=-1).numpy()


def _top_k(probs: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    k = min(k, len(probs))
    idx = np.argpartition(probs, len(probs) - k)[-k:]
    order = np.argsort(probs[idx])[::-1]  # descending by probability
    idx = idx[order]
    return idx, probs[idx]


def _max_context(model) -> int | None:
    for attr in ("max_position_embeddings", "n_positions"):
        value = getattr(model.config, attr, None)
        if isinstance(value, int) and value > 0:
            return value
    return None


def probe_generate(config: ProbeConfig) -> ProbeResult:
    """Top-k sampled continuation of the prompt, one trace step per new token."""
    config.validate()
    if config.mode != "generate":
        raise ProbeError("probe_generate requires generate mode")
    model, tokenizer = _load_model(config.model)
    prompt_ids = tokenizer.encode(config.prompt)
    if not prompt_ids:
        raise TokenizationMismatch("prompt tokenizes to nothing")

    eos = config.eos_token_id
    if eos is None:
        eos = getattr(model.config, "eos_token_id", None)
    limit = _max_context(model)
    budget = config.max_tokens
    if limit is not None:
        budget = min(budget, limit - len(prompt_ids) - 1)
        if budget < 1:
            raise ProbeError(f"prompt ({len(prompt_ids)} tokens) leaves no room in context {limit}")

    generator = torch.Generator().manual_seed(config.seed)
    chosen: list[int] = []
    stalled = False
    with open(config.output_path, "wb") as sink:
        _write_header(sink, config, "probe_generate", len(prompt_ids),
                      int(model.config.vocab_size), config.seed)
        with torch.no_grad():
            out = model(input_ids=torch.tensor([prompt_ids]), use_cache=True)
            for index in range(1, budget + 1):
                probs = _next_probs(out.logits[0, -1], config.temperature)
                ids, top = _top_k(probs, config.top_k)
                renorm = _floor_renormalize(top)
                pick = int(torch.multinomial(torch.from_numpy(renorm), 1, generator=generator))
                token = int(ids[pick])
                _write_step(sink, index, token, ids, renorm)
                chosen.append(token)
                if eos is not None and token == eos:
                    stalled = index < config.max_tokens
                    break
                out = model(input_ids=torch.tensor([[token]]),
                            past_key_values=out.past_key_values, use_cache=True)
            else:
                stalled = budget < config.max_tokens
    return ProbeResult(
        output_path=config.output_path,
        steps=len(chosen),
        prompt_token_count=len(prompt_ids),
        token_ids=chosen,
        stalled=stalled,
    )


def probe_score(config: ProbeConfig) -> ProbeResult:
    """Trace of an existing text under the model, excluding the prompt.

    One forward pass supplies the conditional distribution at every
    position; the causal mask makes this identical to stepwise evaluation.
    """
    config.validate()
    if config.mode != "score":
        raise ProbeError("probe_score requires score mode")
    model, tokenizer = _load_model(config.model)
    full_ids = tokenizer.encode(config.input_text)
    prompt_ids = tokenizer.encode(config.prompt) if config.prompt else []
    if full_ids[: len(prompt_ids)] != prompt_ids:
        raise TokenizationMismatch("prompt tokens are not a prefix of the input tokens")
    scored = full_ids[len(prompt_ids):]
    if not scored:
        raise TokenizationMismatch("input text adds no tokens beyond the prompt")
    if not prompt_ids:
        # the first token has no conditioning context; score from token 2 on
        prompt_ids = full_ids[:1]
        scored = full_ids[1:]
        if not scored:
            raise TokenizationMismatch("need at least two tokens to score without a prompt")
    limit = _max_context(model)
    if limit is not None and len(full_ids) > limit:
        raise ProbeError(f"input ({len(full_ids)} tokens) exceeds model context {limit}")

    with torch.no_grad():
        logits = model(input_ids=torch.tensor([full_ids])).logits[0]

    start = len(prompt_ids)
    with open(config.output_path, "wb") as sink:
        _write_header(sink, config, "probe_score", start,
                      int(model.config.vocab_size), None)
        for index, actual in enumerate(scored, start=1):
            probs = _next_probs(logits[start + index - 2], config.temperature)
            ids, top = _top_k(probs, config.top_k)
            if actual not in ids:
                ids = ids.copy()
                top = top.copy()
                ids[-1] = actual            # entries are sorted descending
                top[-1] = probs[actual]     # raw model probability
            renorm = _floor_renormalize(top)
            _write_step(sink, index, int(actual), ids, renorm)
    return ProbeResult(
        output_path=config.output_path,
        steps=len(scored),
        prompt_token_count=start,
        token_ids=[int(t) for t in scored],
    )
