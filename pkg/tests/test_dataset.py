import json
import shutil
import struct
from pathlib import Path

import numpy as np
import pytest
from scipy.io import wavfile

from ownvoice.dataset import (
    ChecksumError,
    ManifestError,
    ModelFormatError,
    WavFormatError,
    load_manifest,
    load_model,
    read_wav,
    save_model,
    wav_info,
    write_wav,
)
from ownvoice.nlms import NlmsConfig
from ownvoice.rtf import SpeechDependentModel, SpeechIndependentModel
from ownvoice.stft import FrameParams

FIXTURES = Path(__file__).parent / "fixtures"


def test_pcm16_normalisation(tmp_path):
    path = tmp_path / "x.wav"
    wavfile.write(path, 5000, np.array([16384, -32768, 0, 32767], dtype=np.int16))
    x, rate = read_wav(path)
    assert rate == 5000
    assert x[0] == 0.5
    assert x[1] == -1.0
    assert x[3] == 32767 / 32768


def test_float32_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 1000).astype(np.float32).astype(np.float64)
    path = tmp_path / "f.wav"
    write_wav(path, x, 5000)
    y, rate = read_wav(path)
    assert rate == 5000
    np.testing.assert_array_equal(x, y)
    assert wav_info(path) == (1000, 5000)


def test_pcm16_write_read(tmp_path):
    x = np.array([0.5, -0.25, 0.0, -1.0])
    write_wav(tmp_path / "p.wav", x, 8000, "pcm16")
    y, _ = read_wav(tmp_path / "p.wav")
    np.testing.assert_array_equal(x, y)


def test_stereo_rejected(tmp_path):
    path = tmp_path / "s.wav"
    wavfile.write(path, 5000, np.zeros((100, 2), dtype=np.int16))
    with pytest.raises(WavFormatError, match="multichannel unsupported"):
        read_wav(path)


def test_unsupported_encoding(tmp_path):
    path = tmp_path / "i32.wav"
    wavfile.write(path, 5000, np.zeros(100, dtype=np.int32))
    with pytest.raises(WavFormatError, match="unsupported encoding"):
        read_wav(path)


def test_truncated_wav(tmp_path):
    path = tmp_path / "t.wav"
    write_wav(path, np.zeros(1000), 5000, "pcm16")
    data = path.read_bytes()
    path.write_bytes(data[:-100])
    with pytest.raises(WavFormatError, match="truncated"):
        read_wav(path)
    path.write_bytes(data[:30])
    with pytest.raises(WavFormatError):
        read_wav(path)


def test_fixture_manifest():
    m = load_manifest(FIXTURES / "corpus" / "manifest.json")
    assert m.sample_rate == 5000
    assert m.talkers() == ["t01", "t02"]
    assert [u.utterance_id for u in m.utterances("t02")] == ["u0", "u1"]
    assert [u.key for u in m.utterances(split="evaluate")] == [("t01", "u1"), ("t02", "u1")]
    utt = m.entries[0]
    outer, inear = m.load_audio(utt)
    np.testing.assert_array_equal(inear, 0.5 * outer)
    track = m.load_labels(utt, outer.size)
    assert track.spans[0] == (0, 64, 0)
    assert m.inventory().classes == ("sil", "a", "i", "s")


def _copy_corpus(tmp_path):
    dst = tmp_path / "corpus"
    shutil.copytree(FIXTURES / "corpus", dst)
    return dst


def _edit_manifest(path, fn):
    doc = json.loads(path.read_text())
    fn(doc)
    path.write_text(json.dumps(doc))


def test_empty_manifest(tmp_path):
    root = _copy_corpus(tmp_path)
    _edit_manifest(root / "manifest.json", lambda d: d.update(utterances=[]))
    with pytest.raises(ManifestError, match="empty manifest"):
        load_manifest(root / "manifest.json")


def test_rate_mismatch(tmp_path):
    root = _copy_corpus(tmp_path)
    write_wav(root / "audio" / "t01_u0_outer.wav", np.zeros(640), 16000)
    with pytest.raises(ManifestError, match="sample rate"):
        load_manifest(root / "manifest.json")


def test_duplicate_and_missing(tmp_path):
    root = _copy_corpus(tmp_path)
    _edit_manifest(root / "manifest.json", lambda d: d["utterances"].append(dict(d["utterances"][0])))
    with pytest.raises(ManifestError, match="duplicate"):
        load_manifest(root / "manifest.json")
    root2 = _copy_corpus(tmp_path / "b")
    (root2 / "audio" / "t02_u1_inear.wav").unlink()
    with pytest.raises(ManifestError, match="missing"):
        load_manifest(root2 / "manifest.json")


def test_length_mismatch_and_bad_labels(tmp_path):
    root = _copy_corpus(tmp_path)
    write_wav(root / "audio" / "t01_u0_inear.wav", np.zeros(100), 5000, "pcm16")
    with pytest.raises(ManifestError, match="lengths differ"):
        load_manifest(root / "manifest.json")
    root2 = _copy_corpus(tmp_path / "b")
    (root2 / "labels" / "t01_u0.lab").write_text("0\t100\tq\n")
    with pytest.raises(ValueError, match="unknown phoneme"):
        load_manifest(root2 / "manifest.json")


def test_unknown_split(tmp_path):
    root = _copy_corpus(tmp_path)
    _edit_manifest(root / "manifest.json", lambda d: d["utterances"][0].update(split="train"))
    with pytest.raises(ManifestError, match="split"):
        load_manifest(root / "manifest.json")


def _si(p=FrameParams(8, 5000)):
    rng = np.random.default_rng(1)
    return SpeechIndependentModel(rng.standard_normal(5) + 1j * rng.standard_normal(5), p, {"talker": "a"})


def test_si_model_round_trip_bit_exact(tmp_path):
    m = _si()
    save_model(tmp_path / "m.ovm", m)
    back = load_model(tmp_path / "m.ovm")
    assert back.params == m.params
    assert back.meta == {"talker": "a"}
    assert back.rtf.tobytes() == m.rtf.tobytes()


def test_sd_model_round_trip_preserves_validity(tmp_path):
    rng = np.random.default_rng(2)
    table = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))
    m = SpeechDependentModel(table, [True, False, True, False], _si(), 0.75, {"scope": "averaged"})
    save_model(tmp_path / "sd.ovm", m)
    back = load_model(tmp_path / "sd.ovm")
    assert list(back.valid) == [True, False, True, False]
    assert back.smoothing_alpha == 0.75
    assert back.rtf_table.tobytes() == m.rtf_table.tobytes()
    assert back.fallback.rtf.tobytes() == m.fallback.rtf.tobytes()
    assert back.meta == {"scope": "averaged"}
    save_model(tmp_path / "sd2.ovm", back)
    assert (tmp_path / "sd.ovm").read_bytes() == (tmp_path / "sd2.ovm").read_bytes()


def test_adaptive_model_round_trip(tmp_path):
    cfg = NlmsConfig(64, 0.3, 1e-5)
    save_model(tmp_path / "ad.ovm", cfg, meta={"talker": "t"})
    assert load_model(tmp_path / "ad.ovm") == cfg


def test_golden_files():
    si = load_model(FIXTURES / "golden_si.ovm")
    np.testing.assert_array_equal(si.rtf, [1.0, 0.5 - 0.25j, -1.5j, 2.0, 0.125])
    assert si.params == FrameParams(8, 5000)
    sd = load_model(FIXTURES / "golden_sd.ovm")
    np.testing.assert_array_equal(sd.rtf_table, np.arange(15).reshape(3, 5) * (1 - 0.5j))
    assert list(sd.valid) == [True, False, True]
    # payload layout: interleaved little-endian float64, table rows then fallback
    raw = (FIXTURES / "golden_sd.ovm").read_bytes()
    payload = raw[raw.index(b"\n", 15) + 1:]
    assert len(payload) == 16 * 5 * 4
    assert struct.unpack("<4d", payload[16:48]) == (1.0, -0.5, 2.0, -1.0)


def test_golden_bytes_reproduced(tmp_path):
    save_model(tmp_path / "si.ovm", load_model(FIXTURES / "golden_si.ovm"))
    assert (tmp_path / "si.ovm").read_bytes() == (FIXTURES / "golden_si.ovm").read_bytes()


def test_truncated_model_fails_checksum(tmp_path):
    save_model(tmp_path / "m.ovm", _si())
    data = (tmp_path / "m.ovm").read_bytes()
    (tmp_path / "m.ovm").write_bytes(data[:-7])
    with pytest.raises(ChecksumError, match="checksum"):
        load_model(tmp_path / "m.ovm")


def test_flipped_byte_fails_checksum(tmp_path):
    save_model(tmp_path / "m.ovm", _si())
    data = bytearray((tmp_path / "m.ovm").read_bytes())
    data[-3] ^= 0xFF
    (tmp_path / "m.ovm").write_bytes(bytes(data))
    with pytest.raises(ChecksumError):
        load_model(tmp_path / "m.ovm")


def test_version_mismatch(tmp_path):
    save_model(tmp_path / "m.ovm", _si())
    data = (tmp_path / "m.ovm").read_bytes().replace(b'"version":1', b'"version":9')
    (tmp_path / "m.ovm").write_bytes(data)
    with pytest.raises(ModelFormatError, match="version"):
        load_model(tmp_path / "m.ovm")


def test_not_a_model(tmp_path):
    (tmp_path / "x.ovm").write_bytes(b"hello")
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "x.ovm")
