"""Store format, support sampling, and synthetic-corpus tests."""

import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from clapadapt.datastore import (
    EmbeddingRecord,
    EmbeddingStore,
    SyntheticSpec,
    make_synthetic,
    manifest_path,
    read_store,
    sample_support,
    serialize_store,
    store_hash,
    write_store,
)
from clapadapt.errors import (
    BadMagic,
    DuplicateId,
    InvalidSpec,
    ManifestError,
    TruncatedFile,
    UnknownLanguage,
)


def small_spec(**overrides):
    base = dict(
        languages=3,
        dim=8,
        per_class_train=6,
        per_class_test=4,
        separation=3.0,
        seed=71,
    )
    base.update(overrides)
    return SyntheticSpec(**base)


def manual_store():
    recs = [
        EmbeddingRecord("a0", "aa", "train", 0, np.array([1, 0, 0], dtype=np.float32)),
        EmbeddingRecord("a1", "aa", "test", 1, np.array([0, 1, 0], dtype=np.float32)),
        EmbeddingRecord("b0", "bb", "train", 1, np.array([0, 0, 1], dtype=np.float32)),
    ]
    return EmbeddingStore(3, ["aa", "bb"], recs, {"note": "tiny"})


class TestStoreIO:
    def test_round_trip_bit_exact(self, tmp_path):
        store = make_synthetic(small_spec())
        path = str(tmp_path / "s.clapemb")
        h1 = write_store(store, path)
        again = read_store(path)
        blob1, man1 = serialize_store(store)
        blob2, man2 = serialize_store(again)
        assert blob1 == blob2 and man1 == man2
        assert store_hash(again) == h1
        assert again.languages == store.languages
        assert [r.id for r in again.records] == [r.id for r in store.records]

    def test_fields_survive(self, tmp_path):
        store = manual_store()
        path = str(tmp_path / "t.clapemb")
        write_store(store, path)
        got = read_store(path)
        r = got.by_id("a1")
        assert (r.language, r.split, r.label) == ("aa", "test", 1)
        assert np.array_equal(r.vector, np.array([0, 1, 0], dtype=np.float32))
        assert got.meta == {"note": "tiny"}

    def test_hash_stable_across_processes(self, tmp_path):
        code = (
            "from clapadapt.datastore import make_synthetic, SyntheticSpec, store_hash;"
            "print(store_hash(make_synthetic(SyntheticSpec(languages=2,dim=6,"
            "per_class_train=3,per_class_test=2,separation=2.0,seed=5))))"
        )
        out = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, check=True
        ).stdout.strip()
        here = store_hash(
            make_synthetic(
                SyntheticSpec(
                    languages=2, dim=6, per_class_train=3, per_class_test=2,
                    separation=2.0, seed=5,
                )
            )
        )
        assert out == here

    def test_bad_magic(self, tmp_path):
        path = str(tmp_path / "x.clapemb")
        write_store(manual_store(), path)
        raw = bytearray(open(path, "rb").read())
        raw[:8] = b"NOTMAGIC"
        open(path, "wb").write(bytes(raw))
        with pytest.raises(BadMagic):
            read_store(path)

    def test_truncation_detected(self, tmp_path):
        path = str(tmp_path / "x.clapemb")
        write_store(manual_store(), path)
        raw = open(path, "rb").read()
        for cut in (4, 19, len(raw) - 5):
            open(path, "wb").write(raw[:cut])
            with pytest.raises(TruncatedFile):
                read_store(path)

    def test_trailing_bytes_detected(self, tmp_path):
        path = str(tmp_path / "x.clapemb")
        write_store(manual_store(), path)
        with open(path, "ab") as fh:
            fh.write(b"\x00\x01\x02")
        with pytest.raises(TruncatedFile, match="trailing"):
            read_store(path)

    def test_duplicate_id_on_read(self, tmp_path):
        path = str(tmp_path / "x.clapemb")
        write_store(manual_store(), path)
        raw = bytearray(open(path, "rb").read())
        # both "a0" and "a1" are 2-byte ids; rewrite the second to "a0"
        idx = raw.index(b"a1")
        raw[idx : idx + 2] = b"a0"
        open(path, "wb").write(bytes(raw))
        with pytest.raises(DuplicateId):
            read_store(path)

    def test_duplicate_id_on_write(self, tmp_path):
        store = manual_store()
        store.records[1].id = "a0"
        with pytest.raises(DuplicateId):
            write_store(store, str(tmp_path / "x.clapemb"))

    def test_manifest_count_mismatch(self, tmp_path):
        path = str(tmp_path / "x.clapemb")
        write_store(manual_store(), path)
        man = json.load(open(manifest_path(path)))
        man["count"] = 99
        json.dump(man, open(manifest_path(path), "w"))
        with pytest.raises(ManifestError):
            read_store(path)

    def test_manifest_missing(self, tmp_path):
        path = str(tmp_path / "x.clapemb")
        write_store(manual_store(), path)
        import os

        os.remove(manifest_path(path))
        with pytest.raises(ManifestError):
            read_store(path)

    def test_language_index_out_of_range(self, tmp_path):
        path = str(tmp_path / "x.clapemb")
        write_store(manual_store(), path)
        raw = bytearray(open(path, "rb").read())
        # first record: header 20 bytes, id_len u16 + "a0" -> language byte at 24
        assert struct.unpack_from("<H", raw, 20)[0] == 2
        raw[24] = 7
        open(path, "wb").write(bytes(raw))
        with pytest.raises(ManifestError):
            read_store(path)

    def test_subset_and_with_vectors(self):
        store = make_synthetic(small_spec())
        ids = [store.records[4].id, store.records[1].id]
        sub = store.subset(ids)
        assert [r.id for r in sub.records] == [store.records[1].id, store.records[4].id]
        projected = store.with_vectors(np.zeros((len(store), 2), dtype=np.float32))
        assert projected.dim == 2 and len(projected) == len(store)


class TestSampleSupport:
    def test_counts_and_membership(self):
        store = make_synthetic(small_spec())
        sup = sample_support(store, shot=3, seed=9)
        assert sup.total() == 3 * 2 * 3  # shot x labels x languages
        for item in sup.items:
            assert len(item.ids) == 3
            for rid in item.ids:
                rec = store.by_id(rid)
                assert rec.split == "train"
                assert rec.language == item.language and rec.label == item.label
        assert len(set(sup.all_ids())) == sup.total()

    def test_deterministic_and_seed_sensitive(self):
        store = make_synthetic(small_spec())
        a = sample_support(store, shot=2, seed=1).all_ids()
        b = sample_support(store, shot=2, seed=1).all_ids()
        c = sample_support(store, shot=2, seed=2).all_ids()
        assert a == b
        assert a != c

    def test_language_selection_independent_of_other_languages(self):
        store = make_synthetic(small_spec())
        alone = sample_support(store, shot=2, seed=3, languages=["lang01"])
        together = sample_support(store, shot=2, seed=3)
        mine = {(i.language, i.label): i.ids for i in together.items if i.language == "lang01"}
        for item in alone.items:
            assert item.ids == mine[(item.language, item.label)]

    def test_clamping(self):
        store = make_synthetic(small_spec(per_class_train=2))
        sup = sample_support(store, shot=5, seed=4, languages=["lang00"])
        assert sup.total() == 4  # 2 available per label
        assert set(sup.clamped()) == {("lang00", 0, 2), ("lang00", 1, 2)}

    def test_zero_shot_empty(self):
        store = make_synthetic(small_spec())
        sup = sample_support(store, shot=0, seed=5)
        assert sup.total() == 0 and sup.all_ids() == [] and sup.clamped() == []

    def test_within_ids_restriction(self):
        store = make_synthetic(small_spec())
        allowed = [r.id for r in store.select(language="lang00", split="train")][:4]
        sup = sample_support(store, shot=10, seed=6, languages=["lang00"], within_ids=allowed)
        assert set(sup.all_ids()) <= set(allowed)

    def test_unknown_language(self):
        store = make_synthetic(small_spec())
        with pytest.raises(UnknownLanguage):
            sample_support(store, shot=1, seed=0, languages=["nope"])


class TestMakeSynthetic:
    def test_counts_and_split_interleave(self):
        spec = small_spec(per_class_train=5, per_class_test=3)
        store = make_synthetic(spec)
        assert len(store) == 3 * 2 * 8
        for lang in store.languages:
            for cls in (0, 1):
                cluster = [r for r in store.records if r.id.startswith(f"{lang}-c{cls}-")]
                trains = [r for r in cluster if r.split == "train"]
                tests = [r for r in cluster if r.split == "test"]
                assert len(trains) == 5 and len(tests) == 3
                # interleaved, not blocked: both halves contain test records
                test_idx = [int(r.id.rsplit("-", 1)[1]) for r in tests]
                assert min(test_idx) < 4 and max(test_idx) >= 4

    def test_deterministic_bytes(self):
        a = serialize_store(make_synthetic(small_spec()))
        b = serialize_store(make_synthetic(small_spec()))
        assert a == b

    def test_seed_changes_bytes(self):
        a = serialize_store(make_synthetic(small_spec(seed=1)))
        b = serialize_store(make_synthetic(small_spec(seed=2)))
        assert a != b

    def test_unit_norm_when_normalized(self):
        store = make_synthetic(small_spec())
        norms = np.linalg.norm(store.vectors(), axis=1)
        assert np.allclose(norms, 1.0, atol=1e-5)

    def test_cluster_means_match_spec(self):
        # raw (unnormalized) empirical means within 5/sqrt(n) per coordinate
        spec = small_spec(per_class_train=150, per_class_test=50, normalize=False, dim=6)
        store = make_synthetic(spec)
        from clapadapt.veccore import Rng

        rng = Rng(spec.seed)
        n = spec.per_class_train + spec.per_class_test
        bound = 5.0 / np.sqrt(n)
        for lang in store.languages:
            g = rng.split(f"offset|{lang}").normal(spec.dim)
            offset = spec.language_offset_scale * g / np.sqrt(g @ g)
            for cls in (0, 1):
                mean = offset.copy()
                mean[0] += (2 * cls - 1) * spec.separation / 2.0
                rows = np.stack(
                    [r.vector for r in store.records if r.id.startswith(f"{lang}-c{cls}-")]
                )
                assert rows.shape[0] == n
                assert np.abs(rows.mean(axis=0) - mean).max() < bound

    def test_label_noise_flips_recorded_labels(self):
        spec = small_spec(
            languages=1, per_class_train=400, per_class_test=0, label_noise=0.5, seed=13
        )
        store = make_synthetic(spec)
        flipped = sum(
            1
            for r in store.records
            if r.label != int(r.id.split("-c")[1].split("-")[0])
        )
        assert 0.4 < flipped / len(store) < 0.6

    def test_separation_zero_means_chance(self):
        spec = small_spec(languages=1, separation=0.0, language_offset_scale=0.0)
        store = make_synthetic(spec)
        v = store.vectors()
        labels = store.labels()
        mu0 = v[labels == 0].mean(axis=0)
        mu1 = v[labels == 1].mean(axis=0)
        assert np.linalg.norm(mu0 - mu1) < 0.8  # same distribution, small-sample noise

    def test_spec_validation(self):
        with pytest.raises(InvalidSpec):
            small_spec(languages=0).validate()
        with pytest.raises(InvalidSpec):
            small_spec(dim=1).validate()
        with pytest.raises(InvalidSpec):
            small_spec(separation=-1.0).validate()
        with pytest.raises(InvalidSpec):
            small_spec(label_noise=1.5).validate()
        with pytest.raises(InvalidSpec):
            small_spec(per_class_train=0, per_class_test=0).validate()
