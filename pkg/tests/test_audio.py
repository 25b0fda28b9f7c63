import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iva_lqpqm import audio
from iva_lqpqm.audio import StftConfig
from iva_lqpqm.errors import TooShort

seeds = st.integers(0, 2**32 - 1)
SMALL = StftConfig(frame_size=256, hop=64)


def test_config_validation_and_defaults():
    cfg = StftConfig()
    assert (cfg.frame_size, cfg.hop, cfg.n_freq) == (4096, 1024, 2049)
    with pytest.raises(ValueError):
        StftConfig(frame_size=4096, hop=1000)


@pytest.mark.parametrize("cfg", [StftConfig(), SMALL, StftConfig(frame_size=512, hop=256)])
def test_dual_window_reconstruction_identity(cfg):
    # sum over frames of analysis * synthesis is one at every sample
    prod = cfg.analysis_window() * cfg.synthesis_window()
    np.testing.assert_allclose(prod.reshape(-1, cfg.hop).sum(axis=0), 1.0, atol=1e-10)


def test_stft_shapes_and_errors(rng):
    S = audio.stft(rng.standard_normal((2, 1000)), SMALL)
    assert S.shape[:2] == (129, 2)
    assert audio.stft(rng.standard_normal(1000), SMALL).shape[1] == 1
    with pytest.raises(TooShort):
        audio.stft(np.zeros(100), SMALL)
    with pytest.raises(ValueError):
        audio.istft(S[:10], SMALL)


def test_zero_signal():
    S = audio.stft(np.zeros((1, 5000)), SMALL)
    assert not np.any(S)
    assert not np.any(audio.istft(S, SMALL))


def test_sinusoid_energy_at_its_bin():
    cfg = StftConfig()
    t = np.arange(4 * cfg.frame_size)
    k = 100
    S = audio.stft(np.cos(2 * np.pi * k * t / cfg.frame_size), cfg)
    # an interior frame, away from the zero padding
    col = np.abs(S[:, 0, S.shape[2] // 2]) ** 2
    # the Hamming main lobe spans bins k-1..k+1; leakage beyond is tiny
    assert col[k - 1 : k + 2].sum() / col.sum() >= 0.99
    assert np.argmax(col) == k


@settings(max_examples=20)
@given(seeds, st.integers(0, 3000))
def test_round_trip_random(seed, extra):
    rng = np.random.default_rng(seed)
    cfg = StftConfig()
    x = rng.standard_normal((2, 4 * cfg.frame_size + extra))
    y = audio.istft(audio.stft(x, cfg), cfg, length=x.shape[1])
    assert y.shape == x.shape
    assert np.linalg.norm(y - x) / np.linalg.norm(x) <= 1e-6


def test_half_spectrum_synthesis_is_real(rng):
    S = audio.stft(rng.standard_normal(3000), SMALL)
    spec = np.fft.irfft(S[:, 0, 3], n=SMALL.frame_size)
    full = np.fft.ifft(np.concatenate([S[:, 0, 3], np.conj(S[-2:0:-1, 0, 3])]))
    assert np.max(np.abs(full.imag)) <= 1e-10 * np.max(np.abs(full.real))
    np.testing.assert_allclose(full.real, spec, atol=1e-12)


def test_restore_scale_examples(rng):
    I = np.broadcast_to(np.eye(2, dtype=complex), (3, 2, 2))
    # a source absent from the reference mic has a zero image there
    np.testing.assert_allclose(audio.restore_scale(I, 0), np.broadcast_to(np.diag([1, 0]), (3, 2, 2)))
    np.testing.assert_allclose(audio.restore_scale(I[:, :1, :1]), I[:, :1, :1])
    W2 = audio.restore_scale(2 * I, 1)
    np.testing.assert_allclose(W2, np.broadcast_to(np.diag([0, 1]), (3, 2, 2)))
    x = np.array([0.3, -1.2])
    assert np.allclose(audio.restore_scale(2 * I[:, :1, :1])[0] @ x[:1], x[:1])
    W = rng.standard_normal((4, 3, 3)) + 1j * rng.standard_normal((4, 3, 3))
    R = audio.restore_scale(W, reference_channel=1)
    # differs from W only by a diagonal left factor
    D = R @ np.linalg.inv(W)
    off = D - np.einsum("fii->fi", D)[..., None] * np.eye(3)
    assert np.max(np.abs(off)) <= 1e-10


def test_restore_scale_single_source_image(rng):
    # after restoration, source k's output equals its image at the reference mic
    F, M, N = 5, 2, 50
    A = rng.standard_normal((F, M, M)) + 1j * rng.standard_normal((F, M, M))
    W = np.linalg.inv(A) * (rng.standard_normal((F, M, 1)) + 2)
    s = rng.standard_normal((F, 1, N)) + 1j * rng.standard_normal((F, 1, N))
    X = A[:, :, :1] @ s  # only source 0 active
    Y = audio.restore_scale(W, 0) @ X
    np.testing.assert_allclose(Y[:, 0], X[:, 0], atol=1e-6)
    np.testing.assert_allclose(Y[:, 1], 0, atol=1e-6)


def test_wav_round_trip(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, (2, 1000))
    p = tmp_path / "a.wav"
    audio.write_wav(str(p), 16000, x)
    rate, y = audio.read_wav(str(p))
    assert rate == 16000
    assert np.array_equal(y, x.astype(np.float32).astype(np.float64))
    audio.write_wav(str(p), 8000, x[0], dtype="int16")
    rate, y = audio.read_wav(str(p))
    assert y.shape == (1, 1000) and np.max(np.abs(y - x[0])) <= 1 / 32768
    with pytest.raises(ValueError):
        audio.write_wav(str(p), 8000, x, dtype="int8")


def test_add_noise_snr(rng):
    x = rng.standard_normal((2, 200000))
    y = audio.add_noise(x, 10.0, np.random.default_rng(0))
    n = y - x
    assert 10 * np.log10(np.mean(x[0] ** 2) / np.mean(n[0] ** 2)) == pytest.approx(10.0, abs=0.1)


def _noise_sources(rng, T):
    # independent bursty sources are super-Gaussian, as the model assumes
    env = np.repeat(rng.exponential(size=(2, T // 400 + 1)), 400, axis=1)[:, :T]
    return rng.standard_normal((2, T)) * env


def test_separate_instantaneous_mixture(rng):
    cfg = StftConfig(frame_size=512, hop=128)
    S = _noise_sources(rng, 16000 * 3)
    A = np.array([[1.0, 0.6], [0.5, 1.0]])
    y, rep = audio.separate(A @ S, "ipa", 30, cfg, references=A[0][:, None] * S)
    assert np.all(rep.final["delta_si_sir_db"] > 10)
    assert y.shape == S.shape


def test_separate_passthrough(rng):
    cfg = StftConfig(frame_size=512, hop=128)
    S = _noise_sources(rng, 16000 * 2)
    _, rep = audio.separate(S, "ipa", 10, cfg, references=S)
    # the reference mic holds source 0 only, so only its delta is bounded below
    assert rep.final["si_sir_db"][0] >= 0
    assert sorted(rep.final["permutation"]) == [0, 1]


def test_separate_rejects_mono(rng):
    with pytest.raises(ValueError):
        audio.separate(rng.standard_normal((1, 5000)), cfg=SMALL)


def test_separate_file(tmp_path, rng):
    cfg = StftConfig(frame_size=512, hop=128)
    S = _noise_sources(rng, 8000 * 2) * 0.1
    A = np.array([[1.0, 0.6], [0.5, 1.0]])
    mix = tmp_path / "mix.wav"
    audio.write_wav(str(mix), 8000, A @ S)
    refs = []
    for k in range(2):
        p = tmp_path / f"ref{k}.wav"
        audio.write_wav(str(p), 8000, A[0, k] * S[k])
        refs.append(str(p))
    rep, paths = audio.separate_file(str(mix), str(tmp_path / "out"), "ipa", 20, cfg, reference_wavs=refs, noise_snr=40)
    assert [p.rsplit("/", 1)[1] for p in paths] == ["mix_src0.wav", "mix_src1.wav"]
    assert audio.read_wav(paths[0])[1].shape == (1, S.shape[1])
    assert "delta_si_sir_db" in rep.final and rep.final["sample_rate"] == 8000
    bad = tmp_path / "ref_bad.wav"
    audio.write_wav(str(bad), 16000, S[0])
    with pytest.raises(ValueError):
        audio.separate_file(str(mix), str(tmp_path / "out"), "ipa", 2, cfg, reference_wavs=[str(bad), refs[1]])
