import wave

import numpy as np
import pytest

from fingersim.contactaudio import (
    CHUNK_MICROS,
    CHUNK_SAMPLES,
    SAMPLE_RATE,
    AudioChunk,
    ModalModel,
    Mode,
    TimedWaveform,
    chunks_to_array,
    default_modal_model,
    mix_stream,
    synth_impact,
    synth_slip,
    write_wav,
)
from fingersim.elastomer import SlipEvent
from fingersim.errors import DomainError


def make_event(time, speed, pressure=0.05, duration=0.1):
    return SlipEvent(
        time=time, speed=speed, area=10.0, pressure=pressure, duration=duration, released=0.1
    )


class TestImpact:
    def test_zero_force_is_silence(self):
        wav, clipped = synth_impact(0.0, default_modal_model(), 0.2)
        assert not wav.any()
        assert not clipped

    def test_force_linearity_of_rms(self):
        model = default_modal_model()
        w1, c1 = synth_impact(0.5, model, 0.3)
        w2, c2 = synth_impact(1.0, model, 0.3)
        assert not c1 and not c2
        rms1 = np.sqrt(np.mean(w1**2))
        rms2 = np.sqrt(np.mean(w2**2))
        assert rms2 == pytest.approx(2.0 * rms1, abs=1e-9)

    def test_single_mode_spectral_peak(self):
        model = ModalModel(modes=(Mode(frequency=1000.0, damping=50.0, gain=1.0),))
        wav, _ = synth_impact(1.0, model, 0.5)
        spec = np.abs(np.fft.rfft(wav))
        freqs = np.fft.rfftfreq(len(wav), d=1.0 / SAMPLE_RATE)
        peak = freqs[np.argmax(spec)]
        bin_width = freqs[1] - freqs[0]
        assert abs(peak - 1000.0) <= bin_width

    def test_clipping_flag_and_clamp(self):
        wav, clipped = synth_impact(1000.0, default_modal_model(), 0.1)
        assert clipped
        assert np.abs(wav).max() <= 1.0

    def test_nyquist_mode_rejected(self):
        with pytest.raises(DomainError):
            ModalModel(modes=(Mode(frequency=25000.0, damping=10.0, gain=1.0),))


class TestSlip:
    def test_no_events_is_silence(self):
        assert synth_slip([], default_modal_model(), friction=0.9) == []

    def test_support_confined_to_spans(self):
        model = default_modal_model()
        events = [make_event(0.1, 10.0), make_event(0.5, 10.0)]
        bursts = synth_slip(events, model, friction=0.9)
        track = mix_stream(bursts, duration=1.0)
        data = chunks_to_array(track).astype(float)
        peak = np.abs(data).max()
        t = np.arange(len(data)) / SAMPLE_RATE
        inside = ((t >= 0.1) & (t < 0.2 + 1e-9)) | ((t >= 0.5) & (t < 0.6 + 1e-9))
        outside_rms = np.sqrt(np.mean(data[~inside] ** 2))
        assert peak > 0
        assert outside_rms < 1e-6 * peak

    def test_sqrt_amplitude_law(self):
        model = default_modal_model()
        events = [make_event(0.0, 4.0), make_event(0.2, 16.0)]
        bursts = synth_slip(events, model, friction=0.9)
        rms = [np.sqrt(np.mean(b.samples**2)) for b in bursts]
        assert rms[1] / rms[0] == pytest.approx(2.0, rel=0.05)

    def test_determinism(self):
        model = default_modal_model()
        events = [make_event(0.0, 5.0)]
        a = synth_slip(events, model, friction=0.9, seed=7)[0].samples
        b = synth_slip(events, model, friction=0.9, seed=7)[0].samples
        assert np.array_equal(a, b)
        c = synth_slip(events, model, friction=0.9, seed=8)[0].samples
        assert not np.array_equal(a, c)

    def test_band_limits(self):
        model = default_modal_model()
        ev = make_event(0.0, 10.0, duration=1.0)
        burst = synth_slip([ev], model, friction=0.9)[0]
        spec = np.abs(np.fft.rfft(burst.samples)) ** 2
        freqs = np.fft.rfftfreq(len(burst.samples), d=1.0 / SAMPLE_RATE)
        in_band = spec[(freqs > 500) & (freqs < 8000)].sum()
        out_band = spec[(freqs < 250) | (freqs > 16000)].sum()
        assert in_band > 50 * out_band


class TestMix:
    def test_empty_events_zero_chunks_with_timestamps(self):
        chunks = mix_stream([], duration=0.1)
        assert len(chunks) == 5
        for i, c in enumerate(chunks):
            assert c.start == i * CHUNK_MICROS
            assert len(c.samples) == CHUNK_SAMPLES
            assert not c.samples.any()

    def test_impulse_placement_is_sample_exact(self):
        impulse = TimedWaveform(start=1.0, samples=np.array([0.9, 0.5]))
        chunks = mix_stream([impulse], duration=1.1)
        data = chunks_to_array(chunks)
        first = np.flatnonzero(data)[0]
        assert first == 48000
        holding = chunks[first // CHUNK_SAMPLES]
        offset = first - (holding.start * SAMPLE_RATE) // 1_000_000
        assert offset == (1.0 - holding.start / 1e6) * SAMPLE_RATE

    def test_chunk_timestamps_advance_exactly(self):
        chunks = mix_stream([], duration=0.5)
        diffs = {b.start - a.start for a, b in zip(chunks, chunks[1:])}
        assert diffs == {CHUNK_MICROS}

    def test_all_chunks_full_except_final(self):
        chunks = mix_stream([TimedWaveform(0.0, np.zeros(100))], duration=0.0505)
        assert [len(c.samples) for c in chunks[:-1]] == [CHUNK_SAMPLES] * (len(chunks) - 1)
        assert len(chunks[-1].samples) == int(0.0505 * SAMPLE_RATE) - 2 * CHUNK_SAMPLES

    def test_energy_additivity_vs_direct_sum_oracle(self):
        rng = np.random.default_rng(12)
        a = TimedWaveform(0.0, rng.uniform(-0.3, 0.3, size=4800))
        b = TimedWaveform(0.05, rng.uniform(-0.3, 0.3, size=4800))
        chunks = mix_stream([a, b], duration=0.2)
        mixed = chunks_to_array(chunks).astype(float) / 32767.0

        # Direct summation oracle.
        direct = np.zeros(int(0.2 * SAMPLE_RATE))
        direct[: len(a.samples)] += a.samples
        i0 = int(0.05 * SAMPLE_RATE)
        direct[i0 : i0 + len(b.samples)] += b.samples
        assert np.allclose(mixed, direct, atol=1.0 / 32767.0)

        rms2 = np.mean(mixed**2)
        ra, rb = np.mean(a.samples**2) * len(a.samples) / len(direct), np.mean(b.samples**2) * len(b.samples) / len(direct)
        cross = 2 * np.sqrt(ra * rb)
        assert rms2 <= ra + rb + cross + 1e-9

    def test_saturating_clamp(self):
        loud = TimedWaveform(0.0, np.full(100, 0.9))
        chunks = mix_stream([loud, loud], duration=0.01)
        assert chunks_to_array(chunks).max() == 32767


class TestWav:
    def test_riff_export(self, tmp_path):
        model = default_modal_model()
        wav_data, _ = synth_impact(2.0, model, 0.1)
        chunks = mix_stream([TimedWaveform(0.0, wav_data)], duration=0.1)
        path = tmp_path / "impact.wav"
        write_wav(chunks, path)
        with wave.open(str(path), "rb") as fh:
            assert fh.getframerate() == SAMPLE_RATE
            assert fh.getnchannels() == 1
            assert fh.getsampwidth() == 2
            frames = np.frombuffer(fh.readframes(fh.getnframes()), dtype=np.int16)
        assert np.array_equal(frames, chunks_to_array(chunks))

    def test_wrong_rate_rejected(self):
        with pytest.raises(DomainError):
            AudioChunk(samples=np.zeros(10, dtype=np.int16), start=0, rate=44100)
