"""Bridge from pretrained audio-text encoder weights to clapadapt stores.

Three operations, all emitting CLAPEMB1 stores the clapadapt harness reads
directly:

* extract_audio: embed the clips of an audio manifest (path, id, language,
  split, label) into a store of unit-norm pooled audio embeddings.
* extract_prompts: embed one text prompt per class into a two-record
  prototype store.
* finetune_and_dump: train a projection head jointly with the last two
  audio encoder blocks on a k-shot support set, then dump adapted
  embeddings for every manifest row so the harness can treat the
  fine-tuned strategy as a plain store input.

Encoders are loaded by checkpoint identifier: hub identifiers resolve via
transformers, and "local:tiny?..." builds a small deterministic encoder for
tests and offline runs (see encoder.py).
"""

__version__ = "0.1.0"
