"""Contract acceptance: run with `pytest -v -rA tests/test_acceptance.py`;
the test prints one pass line with its timings."""

import time

import numpy as np
from clapadapt.classify import prototypes_from_store
from clapadapt.datastore import read_store, write_store
from clapadapt.experiments import sweep

from clap_extractor.encoder import load_encoder
from clap_extractor.extract import extract_audio, extract_prompts
from clap_extractor.specs import PromptSpec

from conftest import TINY


def test_emitted_stores_satisfy_the_harness_contract(items, spec, tmp_path):
    """Three generated tone/silence clips and two prompts: the emitted
    stores pass the harness reader's validation, carry unit-norm 512-dim
    vectors, and a full harness sweep over the audio store finishes with
    zero error cells. Must complete in under 2 minutes."""
    started = time.perf_counter()
    bundle = load_encoder(TINY)

    audio_path = tmp_path / "audio.clapemb"
    write_store(extract_audio(items, spec, bundle=bundle), str(audio_path))
    prompts_path = tmp_path / "prompts.clapemb"
    write_store(extract_prompts(
        PromptSpec({0: "ordinary conversation", 1: "abusive speech"}),
        spec, bundle=bundle), str(prompts_path))

    audio = read_store(str(audio_path))
    audio.validate()
    prompts = read_store(str(prompts_path))
    prompts.validate()
    for store in (audio, prompts):
        assert store.dim == 512
        for r in store.records:
            assert abs(float(np.linalg.norm(r.vector)) - 1.0) <= 1e-5
    assert len(prototypes_from_store(prompts)) == 2

    table = sweep(audio, shots=[0, 1, 5], master_seed=11,
                  config_overrides={"learning_rate": 1e-3, "epochs": 10})
    errors = [c for c in table.cells if c.status != "ok"]
    assert table.cells and not errors, [c.error for c in errors]

    elapsed = time.perf_counter() - started
    assert elapsed < 120.0
    print(f"PASS extractor contract: stores validate, 512-dim unit vectors, "
          f"{len(table.cells)}-cell harness sweep clean; {elapsed:.1f}s (< 120s)")
