"""Encoder loading and the bundle interface the pipeline trains against.

A bundle wraps one audio-text dual encoder behind four capabilities:
embed a batch of fixed-length waveforms, embed a list of prompt texts,
freeze all weights, and expose the ordered list of audio tower blocks so
fine-tuning can unfreeze exactly the last two.

Checkpoint identifiers:

* "local:tiny?dim=512&seed=7&rate=16000" builds TinyEncoder, a small
  deterministic dual encoder with no pretrained weights. It exists for
  tests and offline pipeline runs; embeddings are meaningless but every
  shape, norm, and determinism contract holds.
* anything else is treated as a transformers hub identifier or local
  directory and loaded via ClapModel/ClapProcessor (requires the optional
  `hf` extra). For the default checkpoint the audio tower is a windowed
  transformer whose stages sit at model.audio_model.audio_encoder.layers;
  "last two blocks" means layers[-2:] of that list.

Any failure to produce a working bundle raises CheckpointLoadFailure.
"""

from __future__ import annotations

from urllib.parse import parse_qsl, urlparse

import numpy as np
import torch
from torch import nn

from .errors import CheckpointLoadFailure

LOCAL_PREFIX = "local:"


class EncoderBundle:
    """Interface contract; see module docstring. Implementations set
    sampling_rate, embed_dim, and checkpoint as plain attributes."""

    sampling_rate: int
    embed_dim: int
    checkpoint: str

    def embed_audio(self, waves: torch.Tensor) -> torch.Tensor:
        """(B, clip_samples) float32 -> (B, embed_dim), differentiable."""
        raise NotImplementedError

    def embed_text(self, texts: list[str]) -> torch.Tensor:
        """list of prompts -> (N, embed_dim)."""
        raise NotImplementedError

    def audio_blocks(self) -> list[nn.Module]:
        """Ordered audio tower blocks; fine-tuning unfreezes [-2:]."""
        raise NotImplementedError

    def freeze(self) -> None:
        raise NotImplementedError


class _ResidualBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.fc1 = nn.Linear(width, width)
        self.fc2 = nn.Linear(width, width)

    def forward(self, x):
        return x + self.fc2(torch.nn.functional.gelu(self.fc1(x)))


class TinyEncoder(nn.Module, EncoderBundle):
    """Deterministic stand-in dual encoder.

    Audio tower: frame the waveform into non-overlapping windows, project
    each frame, run a stack of residual blocks, mean-pool over frames,
    project to embed_dim. Text tower: byte-histogram of the prompt through
    a linear layer, so identical texts map to identical vectors and
    different texts almost surely do not. All weights come from a seeded
    generator; two constructions with the same parameters are identical.
    """

    def __init__(self, dim: int = 512, seed: int = 0, rate: int = 16_000,
                 hidden: int = 32, blocks: int = 4, window: int = 256):
        super().__init__()
        if dim < 1 or hidden < 1 or blocks < 2 or window < 1:
            raise CheckpointLoadFailure(
                f"tiny encoder needs dim/hidden/window >= 1 and blocks >= 2, "
                f"got dim={dim} hidden={hidden} blocks={blocks} window={window}")
        self.sampling_rate = int(rate)
        self.embed_dim = int(dim)
        self.window = int(window)
        self.checkpoint = "local:tiny"
        self.frame_in = nn.Linear(window, hidden)
        self.blocks = nn.ModuleList(_ResidualBlock(hidden) for _ in range(blocks))
        self.audio_out = nn.Linear(hidden, dim)
        self.text_out = nn.Linear(256, dim)
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.empty_like(p).uniform_(-0.2, 0.2, generator=gen))

    def _frames(self, waves: torch.Tensor) -> torch.Tensor:
        n = waves.shape[-1]
        usable = (n // self.window) * self.window
        if usable == 0:  # shorter than one window: zero-pad a single frame
            pad = torch.zeros(waves.shape[0], self.window, dtype=waves.dtype)
            pad[:, :n] = waves
            return pad.unsqueeze(1)
        return waves[:, :usable].reshape(waves.shape[0], -1, self.window)

    def embed_audio(self, waves: torch.Tensor) -> torch.Tensor:
        x = self.frame_in(self._frames(waves))
        for blk in self.blocks:
            x = blk(x)
        return self.audio_out(x.mean(dim=1))

    def embed_text(self, texts: list[str]) -> torch.Tensor:
        hists = np.zeros((len(texts), 256), dtype=np.float32)
        for i, text in enumerate(texts):
            raw = text.encode("utf-8")
            for b in raw:
                hists[i, b] += 1.0
            if raw:
                hists[i] /= len(raw)
        with torch.inference_mode():
            out = self.text_out(torch.from_numpy(hists))
        return out.clone()

    def audio_blocks(self) -> list[nn.Module]:
        return list(self.blocks)

    def freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad_(False)


class HubEncoder(EncoderBundle):
    """transformers-backed bundle for real checkpoints."""

    def __init__(self, checkpoint: str):
        try:
            from transformers import ClapModel, ClapProcessor
        except ImportError as e:
            raise CheckpointLoadFailure(
                f"loading {checkpoint!r} needs the transformers extra: {e}") from e
        try:
            self.model = ClapModel.from_pretrained(checkpoint)
            self.processor = ClapProcessor.from_pretrained(checkpoint)
        except Exception as e:
            raise CheckpointLoadFailure(f"cannot load {checkpoint!r}: {e}") from e
        self.model.eval()
        self.checkpoint = checkpoint
        self.sampling_rate = int(self.processor.feature_extractor.sampling_rate)
        self.embed_dim = int(self.model.config.projection_dim)

    def embed_audio(self, waves: torch.Tensor) -> torch.Tensor:
        # the waveform -> mel step has no trainable parameters, so running
        # it outside the graph keeps fine-tuning gradients intact
        arrays = [w.detach().cpu().numpy() for w in waves]
        feats = self.processor(audios=arrays, sampling_rate=self.sampling_rate,
                               return_tensors="pt")
        return self.model.get_audio_features(**feats)

    def embed_text(self, texts: list[str]) -> torch.Tensor:
        tokens = self.processor(text=texts, return_tensors="pt", padding=True)
        with torch.inference_mode():
            out = self.model.get_text_features(**tokens)
        return out.clone()

    def audio_blocks(self) -> list[nn.Module]:
        return list(self.model.audio_model.audio_encoder.layers)

    def freeze(self) -> None:
        for p in self.model.parameters():
            p.requires_grad_(False)


def _parse_local(checkpoint: str) -> TinyEncoder:
    parsed = urlparse(checkpoint)
    name, query = parsed.path, parsed.query
    if name != "tiny":
        raise CheckpointLoadFailure(f"unknown local encoder {name!r} (have: tiny)")
    args = {}
    for key, value in parse_qsl(query):
        if key not in ("dim", "seed", "rate", "hidden", "blocks", "window"):
            raise CheckpointLoadFailure(f"unknown tiny encoder option {key!r}")
        try:
            args[key] = int(value)
        except ValueError as e:
            raise CheckpointLoadFailure(f"tiny encoder option {key}={value!r}: {e}") from e
    enc = TinyEncoder(**args)
    enc.eval()
    enc.checkpoint = checkpoint
    return enc


def load_encoder(checkpoint: str) -> EncoderBundle:
    if not checkpoint:
        raise CheckpointLoadFailure("empty checkpoint identifier")
    if checkpoint.startswith(LOCAL_PREFIX):
        return _parse_local(checkpoint)
    return HubEncoder(checkpoint)
