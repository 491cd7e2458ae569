"""Shared fixtures: generated WAV clips, a manifest over them, and a tiny
deterministic encoder. Nothing here touches the network; the hub branch of
the loader is exercised only through failure paths."""

import numpy as np
import pytest
from scipy.io import wavfile

from clap_extractor.encoder import load_encoder
from clap_extractor.manifest import AudioItem, write_audio_manifest
from clap_extractor.specs import ExtractionSpec

RATE = 8000
TINY = f"local:tiny?dim=512&seed=7&rate={RATE}"


def tone(freq: float, seconds: float = 1.0, rate: int = RATE) -> np.ndarray:
    t = np.arange(int(seconds * rate)) / rate
    return (0.5 * np.sin(2 * np.pi * freq * t) * 32767).astype(np.int16)


def silence(seconds: float = 1.0, rate: int = RATE) -> np.ndarray:
    return np.zeros(int(seconds * rate), dtype=np.int16)


@pytest.fixture(scope="session")
def clips(tmp_path_factory):
    """Three generated clips: two tones and a silence."""
    d = tmp_path_factory.mktemp("clips")
    paths = {
        "tone440": d / "tone440.wav",
        "tone880": d / "tone880.wav",
        "silence": d / "silence.wav",
    }
    wavfile.write(paths["tone440"], RATE, tone(440))
    wavfile.write(paths["tone880"], RATE, tone(880))
    wavfile.write(paths["silence"], RATE, silence())
    return {k: str(v) for k, v in paths.items()}


@pytest.fixture(scope="session")
def items(clips):
    """Two languages reusing the three clips, both splits, both labels."""
    out = []
    for lang in ("hi", "ta"):
        out += [
            AudioItem(clips["tone440"], f"{lang}-tr0", lang, "train", 0),
            AudioItem(clips["tone880"], f"{lang}-tr1", lang, "train", 1),
            AudioItem(clips["silence"], f"{lang}-te0", lang, "test", 0),
            AudioItem(clips["tone880"], f"{lang}-te1", lang, "test", 1),
        ]
    return out


@pytest.fixture(scope="session")
def manifest_path(items, tmp_path_factory):
    path = tmp_path_factory.mktemp("manifest") / "clips.tsv"
    write_audio_manifest(str(path), items)
    return str(path)


@pytest.fixture()
def spec():
    return ExtractionSpec(checkpoint=TINY, sampling_rate=RATE,
                          clip_seconds=2.0, batch_size=4)


@pytest.fixture()
def bundle():
    return load_encoder(TINY)
