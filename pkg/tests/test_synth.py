import re

import numpy as np
import pytest

from eqn.corpus import load_compact
from eqn.errors import DataError, UsageError
from eqn.synth import MULTI_LABEL_CUT, SynthSpec, generate, recovery_score, write_latents


def small_spec(**kwargs):
    defaults = dict(num_labels=3, vocab_per_label=10, words_per_text=40, num_samples=50, seed=3)
    defaults.update(kwargs)
    return SynthSpec(**defaults)


class TestSpec:
    def test_validation(self):
        with pytest.raises(UsageError):
            SynthSpec(num_labels=1)
        with pytest.raises(UsageError):
            SynthSpec(num_samples=5)
        with pytest.raises(UsageError):
            SynthSpec(num_labels=2, correlation=((1.0,),))
        with pytest.raises(UsageError):
            SynthSpec(num_labels=2, correlation=((0.5, 0.6), (0.5, 0.5)))

    def test_dict_round_trip(self):
        spec = small_spec(correlation=((0.8, 0.2), (0.2, 0.8)), num_labels=2)
        assert SynthSpec.from_dict(spec.to_dict()) == spec
        with pytest.raises(UsageError):
            SynthSpec.from_dict({"bogus": 1})


class TestGenerate:
    def test_collapse_gold_is_argmax_latent(self):
        ds, latents = generate(small_spec())
        for s, z in zip(ds.samples, latents):
            assert s.gold == {int(np.argmax(z))}

    def test_multi_label_gold_follows_midpoint_cut(self):
        ds, latents = generate(small_spec(collapse=False))
        for s, z in zip(ds.samples, latents):
            above = {int(j) for j in np.flatnonzero(z >= MULTI_LABEL_CUT)}
            assert s.gold == (above or {int(np.argmax(z))})

    def test_dominant_latent_dominates_text(self):
        ds, latents = generate(small_spec(words_per_text=100))
        dominant = 0
        for s, z in zip(ds.samples, latents):
            if z.max() / z.sum() < 0.7:
                continue
            counts = [s.text.count(f"em{j}_") for j in range(3)]
            dominant += 1
            assert int(np.argmax(counts)) == int(np.argmax(z))
        assert dominant > 0

    def test_seed_determinism(self):
        a, za = generate(small_spec())
        b, zb = generate(small_spec())
        assert [s.text for s in a.samples] == [s.text for s in b.samples]
        assert np.array_equal(za, zb)

    def test_token_shares_track_latent_shares(self):
        ds, latents = generate(small_spec(num_samples=300, words_per_text=120))
        empirical, expected = [], []
        for s, z in zip(ds.samples, latents):
            tokens = s.text.split()
            for j in range(3):
                empirical.append(sum(1 for t in tokens if t.startswith(f"em{j}_")) / len(tokens))
                expected.append(z[j] / z.sum())
        r = np.corrcoef(empirical, expected)[0, 1]
        assert r > 0.95

    def test_correlation_mixing_keeps_range(self):
        spec = small_spec(collapse=False, num_labels=4,
                          correlation=((0.7, 0.3, 0, 0), (0.3, 0.7, 0, 0), (0, 0, 0.7, 0.3), (0, 0, 0.3, 0.7)))
        _, latents = generate(spec)
        assert latents.min() >= 0.0 and latents.max() <= 10.0

    def test_latents_never_reach_emitted_file(self, tmp_path):
        spec = small_spec()
        ds, latents = generate(spec)
        path = tmp_path / "corpus.csv"
        from eqn.corpus import emit_compact

        emit_compact(ds, path)
        raw = path.read_text(encoding="utf-8")
        assert re.search(r"\d\.\d", raw) is None  # no float-looking values anywhere
        back = load_compact(path, ds.vocab)
        assert all(s.intensities is None for s in back.samples)


class TestRecoveryScore:
    def test_identical_gives_r_one(self):
        from eqn.corpus import with_intensities

        ds, latents = generate(small_spec())
        annotated = with_intensities(ds, latents.tolist())
        scores, mean_r = recovery_score(annotated, latents)
        assert all(s == pytest.approx(1.0, abs=1e-12) for s in scores)
        assert mean_r == pytest.approx(1.0, abs=1e-12)

    def test_shuffled_gives_r_near_zero(self):
        from eqn.corpus import with_intensities

        ds, latents = generate(small_spec(num_samples=500))
        rng = np.random.default_rng(0)
        shuffled = latents[rng.permutation(len(latents))]
        annotated = with_intensities(ds, shuffled.tolist())
        _, mean_r = recovery_score(annotated, latents)
        assert abs(mean_r) < 0.1

    def test_length_mismatch(self):
        from eqn.corpus import with_intensities

        ds, latents = generate(small_spec())
        annotated = with_intensities(ds, latents.tolist())
        with pytest.raises(DataError):
            recovery_score(annotated, latents[:-1])


def test_write_latents_format(tmp_path):
    path = tmp_path / "latent.csv"
    write_latents(np.array([[1.25, 2.5], [0.0, 10.0]]), ("a", "b"), path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "a,b"
    assert lines[1] == "1.250000,2.500000"
