import numpy as np
import pytest
from scipy.signal import lfilter

from ownvoice.dataset import load_manifest, load_model
from ownvoice.harness import talker_accumulators
from ownvoice.rtf import finalize_speech_dependent
from ownvoice.synth import SynthSpec, _segmentation, generate, load_ground_truth, render_utterance


def test_single_phoneme_is_plain_fir(tmp_path):
    spec = SynthSpec(num_talkers=1, utterances_per_talker=2, utterance_length=4000, phoneme_count=1)
    path, truth = generate(spec, tmp_path)
    m = load_manifest(path)
    g = truth.talkers["t01"][0]
    for utt in m.entries:
        outer, inear = m.load_audio(utt)
        np.testing.assert_array_equal(inear, lfilter(g, 1, outer).astype(np.float32))


def test_same_seed_same_bytes(tmp_path):
    spec = SynthSpec(num_talkers=2, utterances_per_talker=2, utterance_length=3000)
    generate(spec, tmp_path / "a")
    generate(spec, tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 2 * 2 * 3 + 6
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_different_seed_differs(tmp_path):
    a = generate(SynthSpec(seed=1, num_talkers=1, utterances_per_talker=1), tmp_path / "a")[1]
    b = generate(SynthSpec(seed=2, num_talkers=1, utterances_per_talker=1), tmp_path / "b")[1]
    assert not np.array_equal(a.base, b.base)


@pytest.mark.parametrize("seed", range(5))
def test_spans_respect_minimum(seed):
    spec = SynthSpec(seed=seed, utterance_length=9000, min_span_frames=4, max_span_frames=9)
    spans = _segmentation(np.random.default_rng(seed), spec)
    assert spans[0][0] == 0 and spans[-1][1] == spec.utterance_length
    assert all(e - s >= 4 * spec.params.hop for s, e, _ in spans)
    assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))


def test_crossfade_is_local():
    spec = SynthSpec(utterance_length=3000, phoneme_count=2)
    filters = np.array([[2.0, 0, 0, 0], [3.0, 0, 0, 0]])
    outer, inear, spans = render_utterance(np.random.default_rng(0), spec, filters)
    half = spec.frame_length // 2
    for s, e, p in spans:
        lo = s + half if s else 0
        hi = e - half if e < spec.utterance_length else e
        np.testing.assert_allclose(inear[lo:hi], np.float32(filters[p, 0] * outer[lo:hi]), rtol=1e-7)


def test_two_gains_recovered(tmp_path):
    spec = SynthSpec(num_talkers=1, utterances_per_talker=4, utterance_length=60000, phoneme_count=2,
                     perturbation_scale=0.0, min_span_frames=200, max_span_frames=400, silence_level=1.0)
    path, _ = generate(spec, tmp_path, base_filters=[[2.0], [3.0]])
    acc = talker_accumulators(load_manifest(path), spec.params)["t01"]
    sd = finalize_speech_dependent(acc, spec.params)
    np.testing.assert_allclose(sd.rtf_table[0], 2.0, rtol=0.01)
    np.testing.assert_allclose(sd.rtf_table[1], 3.0, rtol=0.01)


def test_zero_perturbation_shares_filters(tmp_path):
    spec = SynthSpec(num_talkers=3, utterances_per_talker=1, utterance_length=2000, perturbation_scale=0.0)
    _, truth = generate(spec, tmp_path)
    for taps in truth.talkers.values():
        np.testing.assert_array_equal(taps, truth.base)


def test_ground_truth_files(tmp_path):
    spec = SynthSpec(num_talkers=2, utterances_per_talker=1, utterance_length=2000, inventory_size=8)
    _, truth = generate(spec, tmp_path)
    back = load_ground_truth(tmp_path)
    np.testing.assert_array_equal(back.base, truth.base)
    model = load_model(tmp_path / "ground_truth" / "t02.ovm")
    assert model.num_phonemes == 8
    assert list(model.valid) == [True] * 5 + [False] * 3
    np.testing.assert_array_equal(model.rtf_table[:5], truth.response("t02"))


def test_spec_validation():
    for bad in [dict(num_talkers=0), dict(excitation="speech"), dict(min_span_frames=5, max_span_frames=4),
                dict(fir_length=200), dict(inventory_size=3), dict(gain_range=(0, 1)),
                dict(perturbation_scale=-1)]:
        with pytest.raises(ValueError):
            SynthSpec(**bad)
    with pytest.raises(ValueError):
        generate(SynthSpec(), "/nonexistent-unused", base_filters=[[1.0]])


@pytest.mark.parametrize("excitation", ["filtered-noise", "pulse-train"])
def test_other_excitations(tmp_path, excitation):
    spec = SynthSpec(num_talkers=1, utterances_per_talker=1, utterance_length=3000, excitation=excitation)
    m = load_manifest(generate(spec, tmp_path)[0])
    outer, inear = m.load_audio(m.entries[0])
    assert np.all(np.isfinite(outer)) and np.std(outer) > 0 and np.std(inear) > 0
