"""typlab-probe: token-probability trace extraction from causal language models."""

from .config import ModelLoadFailure, ProbeConfig, ProbeError, TokenizationMismatch
from .runner import ProbeResult, probe_generate, probe_score

__version__ = "0.1.0"
