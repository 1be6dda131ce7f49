import numpy as np
import pytest
import wfdb
from hypothesis import given
from hypothesis import strategies as st

from vfdetect.ingest import (
    EcgEpisode,
    EcgRecord,
    RecordHeader,
    Rhythm,
    RhythmAnnotation,
    SignalSpec,
    WfdbError,
    decode_212,
    decode_signal,
    encode_212,
    extract_episodes,
    parse_annotations,
    parse_header,
    read_csv_episode,
    read_record,
    rhythm_mask,
    write_csv_episode,
)


def write_wfdb(tmp_path, name, signal, fmt="212", fs=250, gain=200.0, baseline=0, ann=None):
    """Write a record with the reference wfdb package; ``ann`` is (samples, symbols, aux)."""
    sig = np.atleast_2d(np.asarray(signal)).T if np.ndim(signal) == 1 else np.asarray(signal)
    n_ch = sig.shape[1]
    wfdb.wrsamp(
        name, fs=fs, units=["mV"] * n_ch, sig_name=[f"ch{i}" for i in range(n_ch)],
        d_signal=sig.astype(np.int64), fmt=[fmt] * n_ch, adc_gain=[gain] * n_ch,
        baseline=[baseline] * n_ch, write_dir=str(tmp_path),
    )
    if ann is not None:
        samples, symbols, aux = ann
        wfdb.wrann(
            name, "atr", np.asarray(samples), symbol=list(symbols), aux_note=list(aux),
            write_dir=str(tmp_path),
        )
    return tmp_path / name


# ---------------------------------------------------------------- format 212


def test_212_byte_layout():
    # first sample: byte 0 plus low nibble of byte 1; second: high nibble of byte 1 plus byte 2
    assert decode_212(bytes([0x01, 0x20, 0x02]), 2).tolist() == [1, 514]
    assert encode_212([1, 2]) == bytes([0x01, 0x00, 0x02])
    assert decode_212(bytes([0xFF, 0xFF, 0xFF]), 2).tolist() == [-1, -1]
    assert decode_212(bytes([0x00, 0x08, 0x00]), 2).tolist() == [-2048, 0]


@given(st.lists(st.integers(-2048, 2047), max_size=200))
def test_212_round_trip(values):
    assert decode_212(encode_212(values), len(values)).tolist() == values


def test_212_truncated_names_offset():
    with pytest.raises(WfdbError, match="byte offset 4"):
        decode_212(bytes(4), 4)


def test_212_out_of_range():
    with pytest.raises(WfdbError):
        encode_212([2048])


@pytest.mark.parametrize("fmt", ["212", "16"])
def test_signal_matches_reference_reader(tmp_path, fmt):
    rng = np.random.default_rng(0)
    d = rng.integers(-2000, 2000, (1001, 2))
    path = write_wfdb(tmp_path, "rec", d, fmt=fmt, gain=100.0, baseline=7)
    ours = read_record(path)
    ref = wfdb.rdrecord(str(path), physical=True)
    assert ours.header.n_signals == 2
    for j in range(2):
        np.testing.assert_allclose(ours.channels[j], ref.p_signal[:, j], rtol=0, atol=1e-12)
        np.testing.assert_allclose(ours.channels[j], (d[:, j] - 7) / 100.0)


def test_read_record_accepts_hea_suffix(tmp_path):
    path = write_wfdb(tmp_path, "rec", np.arange(10))
    a = read_record(path)
    b = read_record(str(path) + ".hea")
    np.testing.assert_array_equal(a.channels[0], b.channels[0])
    assert a.annotations == []


def test_truncated_signal_file(tmp_path):
    path = write_wfdb(tmp_path, "rec", np.arange(100), fmt="16")
    dat = tmp_path / "rec.dat"
    dat.write_bytes(dat.read_bytes()[:50])
    with pytest.raises(WfdbError, match="byte offset 50"):
        read_record(path)


# ---------------------------------------------------------------- header


def test_header_defaults():
    h = parse_header("r 1\nr.dat 212\n")
    assert h.sampling_rate_hz == 250.0 and h.n_samples is None
    s = h.signals[0]
    assert s.adc_gain == 200.0 and s.baseline == s.adc_zero == 0


def test_header_full_fields():
    h = parse_header(
        "# comment\n"
        "cu01 2 250 127232\n"
        "cu01.dat 212 400(12)/mV 12 0 -27 -12345 0 ECG\n"
        "cu01.dat 212x1:0+0 200 12 5 0 0 0 other\n"
    )
    assert h.record_name == "cu01" and h.n_samples == 127232
    a, b = h.signals
    assert (a.adc_gain, a.baseline, a.units, a.description) == (400.0, 12, "mV", "ECG")
    assert b.baseline == b.adc_zero == 5


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("r 2 250\nr.dat 212\n", 2),
        ("r 1 250\nr.dat 80\n", 2),
        ("r 1 250\nr.dat\n", 2),
        ("r/3 1 250\nr.dat 212\n", 1),
    ],
)
def test_header_errors_name_the_line(text, line):
    with pytest.raises(WfdbError, match=f"line {line}"):
        parse_header(text)


# ---------------------------------------------------------------- annotations


def test_annotations_match_written_rhythms(tmp_path):
    samples = [0, 100, 150, 400, 700, 800, 900]
    symbols = ["+", "N", "+", "+", "[", "]", "+"]
    aux = ["(N", "", "(VF", "(NOISE", "", "", "(VFL"]
    path = write_wfdb(tmp_path, "rec", np.zeros(1000), ann=(samples, symbols, aux))
    anns = read_record(path).annotations
    assert anns == [
        RhythmAnnotation(0, Rhythm.NOT_VF),
        RhythmAnnotation(150, Rhythm.VF),
        RhythmAnnotation(400, Rhythm.NOISE),
        RhythmAnnotation(700, Rhythm.VF),
        RhythmAnnotation(800, Rhythm.NOT_VF),
        RhythmAnnotation(900, Rhythm.VF),
    ]


def test_annotation_long_gap_uses_skip(tmp_path):
    samples = [5, 3000]
    path = write_wfdb(
        tmp_path, "rec", np.zeros(4000), ann=(samples, ["+", "+"], ["(VF", "(N"])
    )
    raw = (tmp_path / "rec.atr").read_bytes()
    assert [a.sample_index for a in parse_annotations(raw)] == [5, 3000]


def test_custom_vf_labels(tmp_path):
    path = write_wfdb(tmp_path, "rec", np.zeros(100), ann=([0], ["+"], ["(VT"]))
    assert read_record(path, vf_labels=("(VT",)).annotations[0].rhythm_label is Rhythm.VF
    assert read_record(path).annotations[0].rhythm_label is Rhythm.NOT_VF


# ---------------------------------------------------------------- episodes


def _record(n, anns, fs=10.0):
    header = RecordHeader("t", 1, fs, n, (SignalSpec("t.dat", 212),))
    return EcgRecord(header, [np.arange(n, dtype=float)], anns)


def test_rhythm_mask_defaults_to_not_vf_before_first_annotation():
    rec = _record(10, [RhythmAnnotation(3, Rhythm.VF), RhythmAnnotation(7, Rhythm.NOISE)])
    assert rhythm_mask(rec).tolist() == [0, 0, 0, 1, 1, 1, 1, 2, 2, 2]


def test_episode_labels_majority_and_noise():
    # fs 10: 1 s windows of 10 samples, hop 1 s
    rec = _record(60, [
        RhythmAnnotation(0, Rhythm.NOT_VF),
        RhythmAnnotation(14, Rhythm.VF),
        RhythmAnnotation(35, Rhythm.NOISE),
        RhythmAnnotation(41, Rhythm.NOT_VF),
    ])
    eps = extract_episodes(rec, episode_length_s=1.0, hop_s=1.0)
    assert [(e.start, e.label) for e in eps] == [
        (0, Rhythm.NOT_VF),
        (10, Rhythm.VF),  # 6 of 10 samples VF
        (20, Rhythm.VF),
        (50, Rhythm.NOT_VF),
    ]
    assert all(len(e.samples) == 10 for e in eps)
    assert eps[1].samples[0] == 10.0


def test_episode_exact_half_is_not_vf():
    rec = _record(10, [RhythmAnnotation(5, Rhythm.VF)])
    (ep,) = extract_episodes(rec, episode_length_s=1.0, hop_s=1.0)
    assert ep.label is Rhythm.NOT_VF


def test_episode_hop_and_partial_tail():
    rec = _record(25, [])
    eps = extract_episodes(rec, episode_length_s=1.0, hop_s=0.5)
    assert [e.start for e in eps] == [0, 5, 10, 15]


def test_bad_channel():
    with pytest.raises(IndexError):
        extract_episodes(_record(20, []), channel=1)


def test_episode_rejects_noise_label():
    with pytest.raises(ValueError):
        EcgEpisode(np.zeros(3), 250.0, 1.0, Rhythm.NOISE)


def test_csv_round_trip(tmp_path):
    ep = EcgEpisode(np.random.default_rng(0).standard_normal(50), 250.0, 0.2, Rhythm.VF, "cu01", 750)
    write_csv_episode(tmp_path / "e.csv", ep)
    back = read_csv_episode(tmp_path / "e.csv")
    np.testing.assert_array_equal(back.samples, ep.samples)
    assert (back.label, back.source, back.start, back.sampling_rate_hz) == (Rhythm.VF, "cu01", 750, 250.0)


def test_csv_missing_meta_field(tmp_path):
    (tmp_path / "e.csv").write_text("1\n2\n")
    (tmp_path / "e.meta").write_text("label=VF\n")
    with pytest.raises(WfdbError, match="fs"):
        read_csv_episode(tmp_path / "e.csv")


def test_decode_signal_physical_units():
    header = parse_header("r 1 360 4\nr.dat 16 50(10)\n")
    payload = np.array([10, 60, -40, 110], dtype="<i2").tobytes()
    assert decode_signal(payload, header)[0].tolist() == [0.0, 1.0, -1.0, 2.0]


def test_episode_counts_for_long_and_boundary_records():
    header = RecordHeader("t", 1, 250.0, None, (SignalSpec("t.dat", 212),))
    eight_min = EcgRecord(header, [np.zeros(8 * 60 * 250)], [])
    eps = extract_episodes(eight_min, 5.0, 1.0)
    assert len(eps) == 476 and {len(e.samples) for e in eps} == {1250}
    assert np.all(np.diff([e.start for e in eps]) == 250)
    assert len(extract_episodes(EcgRecord(header, [np.zeros(1250)], []), 5.0)) == 1
    assert extract_episodes(EcgRecord(header, [np.zeros(1249)], []), 5.0) == []
