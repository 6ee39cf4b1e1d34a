"""Probe configuration and errors."""

from __future__ import annotations

from dataclasses import dataclass


class ProbeError(Exception):
    """Base class for probe failures."""


class ModelLoadFailure(ProbeError):
    """The model or tokenizer could not be loaded."""


class TokenizationMismatch(ProbeError):
    """The prompt does not tokenize to a prefix of the input text."""


MODES = ("generate", "score")


@dataclass
class ProbeConfig:
    """Parameters for one probe run.

    `model` is anything transformers can load (a local directory or hub id).
    In score mode `input_text` must contain the prompt as a prefix and
    tokenize to at least one token beyond it; statistics cover only the
    post-prompt tokens. Probabilities are softmax at `temperature` (1.0
    unless overridden; non-default values are appended to the trace's
    model label).
    """

    model: str
    mode: str
    output_path: str
    prompt: str = ""
    input_text: str | None = None
    top_k: int = 100
    max_tokens: int = 512
    seed: int = 0
    temperature: float = 1.0
    eos_token_id: int | None = None  # override the model's own end marker

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ProbeError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.top_k < 1:
            raise ProbeError("top_k must be >= 1")
        if self.max_tokens < 1:
            raise ProbeError("max_tokens must be >= 1")
        if self.temperature <= 0:
            raise ProbeError("temperature must be > 0")
        if self.mode == "score":
            if not self.input_text:
                raise ProbeError("score mode requires input_text")
            if len(self.input_text) <= len(self.prompt):
                raise ProbeError("score mode requires input text longer than the prompt")
        if self.mode == "generate" and not self.prompt:
            raise ProbeError("generate mode requires a non-empty prompt")
