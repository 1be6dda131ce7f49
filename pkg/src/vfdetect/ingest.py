"""Reading WFDB records and cutting them into labeled episodes.

Only what the VF databases need is supported: header files, signal
files in formats 212 and 16, and MIT-format annotation files carrying
rhythm changes.  A plain CSV episode format is also provided so that
the rest of the pipeline can be driven without WFDB files.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "Rhythm",
    "SignalSpec",
    "RecordHeader",
    "RhythmAnnotation",
    "EcgRecord",
    "EcgEpisode",
    "WfdbError",
    "parse_header",
    "decode_signal",
    "encode_212",
    "decode_212",
    "parse_annotations",
    "read_record",
    "rhythm_mask",
    "extract_episodes",
    "read_csv_episode",
    "write_csv_episode",
]

SUPPORTED_FORMATS = (212, 16)
DEFAULT_GAIN = 200.0
DEFAULT_FS = 250.0

# Annotation type codes from the MIT annotation format.
_RHYTHM = 28
_NOISE = 14
_VFON = 32
_VFOFF = 33
_SKIP = 59
_NUM = 60
_SUB = 61
_CHN = 62
_AUX = 63

DEFAULT_VF_LABELS = ("(VF", "(VFL")
DEFAULT_NOISE_LABELS = ("(NOISE", "(NOD")


class WfdbError(ValueError):
    """Malformed or unsupported WFDB input."""


class Rhythm(enum.Enum):
    VF = "VF"
    NOT_VF = "NOT_VF"
    NOISE = "NOISE"


@dataclass(frozen=True)
class SignalSpec:
    file_name: str
    storage_format: int
    adc_gain: float = DEFAULT_GAIN
    baseline: int = 0
    units: str = "mV"
    adc_resolution: int = 12
    adc_zero: int = 0
    initial_value: int = 0
    description: str = ""


@dataclass(frozen=True)
class RecordHeader:
    record_name: str
    n_signals: int
    sampling_rate_hz: float
    n_samples: int | None
    signals: tuple[SignalSpec, ...]

    def __post_init__(self):
        if self.n_signals < 1:
            raise WfdbError("a record needs at least one signal")
        if self.sampling_rate_hz <= 0:
            raise WfdbError(f"sampling rate must be positive, got {self.sampling_rate_hz}")
        if len(self.signals) != self.n_signals:
            raise WfdbError(
                f"header declares {self.n_signals} signals but describes {len(self.signals)}"
            )


@dataclass(frozen=True)
class RhythmAnnotation:
    sample_index: int
    rhythm_label: Rhythm


@dataclass
class EcgRecord:
    header: RecordHeader
    channels: list[np.ndarray]
    annotations: list[RhythmAnnotation] = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return len(self.channels[0])

    @property
    def fs(self) -> float:
        return self.header.sampling_rate_hz


@dataclass
class EcgEpisode:
    """One fixed-length labeled window of a single ECG channel, in mV."""

    samples: np.ndarray
    sampling_rate_hz: float
    episode_length_s: float
    label: Rhythm
    source: str = ""
    start: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.label is Rhythm.NOISE:
            raise ValueError("episodes are never labeled NOISE")

    @property
    def is_vf(self) -> bool:
        return self.label is Rhythm.VF


# --------------------------------------------------------------------------
# header

_RECORD_LINE = re.compile(
    r"^(?P<name>[^\s/]+)(?:/(?P<nseg>\d+))?\s+(?P<nsig>\d+)"
    r"(?:\s+(?P<fs>[0-9.eE+-]+)(?:/[0-9.eE+-]+)?(?:\([0-9.eE+-]+\))?"
    r"(?:\s+(?P<nsamp>\d+))?)?"
)
_FORMAT_FIELD = re.compile(r"^(?P<fmt>\d+)(?:x\d+)?(?::\d+)?(?:\+\d+)?$")
_GAIN_FIELD = re.compile(
    r"^(?P<gain>[0-9.eE+-]+)(?:\((?P<baseline>-?\d+)\))?(?:/(?P<units>\S+))?$"
)


def _signal_line(line: str, lineno: int) -> SignalSpec:
    fields = line.split(maxsplit=8)
    if len(fields) < 2:
        raise WfdbError(f"line {lineno}: signal line needs a file name and a format")
    m = _FORMAT_FIELD.match(fields[1])
    if not m:
        raise WfdbError(f"line {lineno}: cannot read storage format {fields[1]!r}")
    fmt = int(m.group("fmt"))
    if fmt not in SUPPORTED_FORMATS:
        raise WfdbError(
            f"line {lineno}: storage format {fmt} is not supported (only 212 and 16)"
        )
    gain, baseline, units = DEFAULT_GAIN, None, "mV"
    if len(fields) > 2:
        g = _GAIN_FIELD.match(fields[2])
        if not g:
            raise WfdbError(f"line {lineno}: cannot read ADC gain {fields[2]!r}")
        gain = float(g.group("gain")) or DEFAULT_GAIN
        if g.group("baseline") is not None:
            baseline = int(g.group("baseline"))
        units = g.group("units") or units
    try:
        resolution = int(fields[3]) if len(fields) > 3 else 12
        adc_zero = int(fields[4]) if len(fields) > 4 else 0
        init = int(fields[5]) if len(fields) > 5 else 0
    except ValueError as exc:
        raise WfdbError(f"line {lineno}: {exc}") from None
    description = fields[8].strip() if len(fields) > 8 else ""
    return SignalSpec(
        file_name=fields[0],
        storage_format=fmt,
        adc_gain=gain,
        # baseline defaults to the ADC zero when omitted
        baseline=adc_zero if baseline is None else baseline,
        units=units,
        adc_resolution=resolution,
        adc_zero=adc_zero,
        initial_value=init,
        description=description,
    )


def parse_header(text: str) -> RecordHeader:
    """Parse the contents of a ``.hea`` file.

    Comment lines (``#``) and blank lines are skipped.  Missing optional
    fields take the WFDB defaults: 250 Hz, gain 200 adu/mV, baseline
    equal to the ADC zero.
    """
    lines = [
        (i, ln.strip())
        for i, ln in enumerate(text.splitlines(), start=1)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines:
        raise WfdbError("line 1: empty header")
    lineno, record_line = lines[0]
    m = _RECORD_LINE.match(record_line)
    if not m:
        raise WfdbError(f"line {lineno}: malformed record line {record_line!r}")
    if m.group("nseg"):
        raise WfdbError(f"line {lineno}: multi-segment records are not supported")
    n_signals = int(m.group("nsig"))
    fs = float(m.group("fs")) if m.group("fs") else DEFAULT_FS
    n_samples = int(m.group("nsamp")) if m.group("nsamp") else None

    signal_lines = lines[1:]
    if len(signal_lines) != n_signals:
        where = signal_lines[-1][0] if signal_lines else lineno
        raise WfdbError(
            f"line {where}: header declares {n_signals} signals "
            f"but has {len(signal_lines)} signal lines"
        )
    signals = tuple(_signal_line(ln, i) for i, ln in signal_lines)
    return RecordHeader(
        record_name=m.group("name"),
        n_signals=n_signals,
        sampling_rate_hz=fs,
        n_samples=n_samples,
        signals=signals,
    )


# --------------------------------------------------------------------------
# signal files


def encode_212(samples: Sequence[int]) -> bytes:
    """Pack 12-bit two's-complement samples, two per three bytes."""
    s = np.asarray(samples, dtype=np.int64)
    if s.size and (s.min() < -2048 or s.max() > 2047):
        raise WfdbError("format 212 holds samples in [-2048, 2047]")
    if s.size % 2:
        s = np.append(s, 0)
    u = (s & 0xFFF).reshape(-1, 2)
    out = np.empty((u.shape[0], 3), dtype=np.uint8)
    out[:, 0] = u[:, 0] & 0xFF
    out[:, 1] = ((u[:, 0] >> 8) & 0x0F) | (((u[:, 1] >> 8) & 0x0F) << 4)
    out[:, 2] = u[:, 1] & 0xFF
    return out.tobytes()


def decode_212(payload: bytes, n_values: int) -> np.ndarray:
    """Unpack ``n_values`` format-212 samples from ``payload``."""
    need = 3 * (n_values // 2) + (2 if n_values % 2 else 0)
    if len(payload) < need:
        raise WfdbError(
            f"truncated format 212 payload: need {need} bytes, "
            f"data ends at byte offset {len(payload)}"
        )
    n_pairs = (n_values + 1) // 2
    # an odd count may end on a two-byte tail
    buf = payload[:need].ljust(3 * n_pairs, b"\x00")
    b = np.frombuffer(buf, dtype=np.uint8).reshape(n_pairs, 3).astype(np.int64)
    first = b[:, 0] | ((b[:, 1] & 0x0F) << 8)
    second = b[:, 2] | ((b[:, 1] & 0xF0) << 4)
    out = np.empty(2 * len(b), dtype=np.int64)
    out[0::2] = first
    out[1::2] = second
    out = out[:n_values]
    out[out > 2047] -= 4096
    return out


def decode_signal(
    payload: bytes, header: RecordHeader, signals: Sequence[int] | None = None
) -> list[np.ndarray]:
    """Decode one signal file into physical-unit channels.

    ``signals`` lists the header indices stored (interleaved) in this
    file; by default every signal in the header.  All of them must share
    one storage format.
    """
    idx = list(range(header.n_signals)) if signals is None else list(signals)
    specs = [header.signals[i] for i in idx]
    fmts = {s.storage_format for s in specs}
    if len(fmts) != 1:
        raise WfdbError("signals interleaved in one file must share a storage format")
    fmt = fmts.pop()
    n_ch = len(specs)

    if header.n_samples is not None:
        n_frames = header.n_samples
    elif fmt == 16:
        n_frames = len(payload) // (2 * n_ch)
    else:
        n_frames = (2 * len(payload) // 3) // n_ch
    n_values = n_frames * n_ch

    if fmt == 212:
        adu = decode_212(payload, n_values)
    else:
        need = 2 * n_values
        if len(payload) < need:
            raise WfdbError(
                f"truncated format 16 payload: need {need} bytes, "
                f"data ends at byte offset {len(payload)}"
            )
        adu = np.frombuffer(payload, dtype="<i2", count=n_values).astype(np.int64)

    frames = adu.reshape(n_frames, n_ch)
    return [
        (frames[:, j] - spec.baseline) / spec.adc_gain for j, spec in enumerate(specs)
    ]


# --------------------------------------------------------------------------
# annotations


def _rhythm_from_aux(aux: str, vf_labels, noise_labels) -> Rhythm:
    aux = aux.strip("\x00 ").strip()
    if aux in vf_labels:
        return Rhythm.VF
    if aux in noise_labels:
        return Rhythm.NOISE
    return Rhythm.NOT_VF


def parse_annotations(
    payload: bytes,
    vf_labels: Sequence[str] = DEFAULT_VF_LABELS,
    noise_labels: Sequence[str] = DEFAULT_NOISE_LABELS,
) -> list[RhythmAnnotation]:
    """Extract rhythm changes from an MIT-format annotation file.

    Rhythm annotations (``+`` with an aux string such as ``(VF``) and the
    VF onset/offset markers ``[`` and ``]`` are kept; beat annotations
    only advance the clock.
    """
    out: list[RhythmAnnotation] = []
    pos = 0
    t = 0
    last: tuple[int, int] | None = None  # (type code, sample) of the pending annotation
    n = len(payload)
    while pos + 1 < n:
        word = payload[pos] | (payload[pos + 1] << 8)
        code, value = word >> 10, word & 0x3FF
        pos += 2
        if code == 0 and value == 0:
            break
        if code == _SKIP:
            if pos + 4 > n:
                raise WfdbError(f"truncated SKIP annotation at byte offset {pos - 2}")
            hi = payload[pos] | (payload[pos + 1] << 8)
            lo = payload[pos + 2] | (payload[pos + 3] << 8)
            skip = (hi << 16) | lo
            if skip >= 1 << 31:
                skip -= 1 << 32
            t += skip
            pos += 4
        elif code == _AUX:
            if pos + value > n:
                raise WfdbError(f"truncated AUX annotation at byte offset {pos - 2}")
            aux = payload[pos:pos + value].decode("latin-1")
            pos += value + (value & 1)
            if last is not None and last[0] == _RHYTHM:
                out.append(
                    RhythmAnnotation(last[1], _rhythm_from_aux(aux, vf_labels, noise_labels))
                )
                last = None
        elif code in (_NUM, _SUB, _CHN):
            pass
        else:
            t += value
            last = (code, t)
            if code == _VFON:
                out.append(RhythmAnnotation(t, Rhythm.VF))
            elif code == _VFOFF:
                out.append(RhythmAnnotation(t, Rhythm.NOT_VF))
    out.sort(key=lambda a: a.sample_index)
    return out


def read_record(
    path: str | Path,
    annotator: str = "atr",
    vf_labels: Sequence[str] = DEFAULT_VF_LABELS,
    noise_labels: Sequence[str] = DEFAULT_NOISE_LABELS,
) -> EcgRecord:
    """Read ``<path>.hea``, its signal files and ``<path>.<annotator>``.

    ``path`` may name the record with or without the ``.hea`` suffix.
    A missing annotation file yields an unannotated (all NOT_VF) record.
    """
    path = Path(path)
    if path.suffix == ".hea":
        path = path.with_suffix("")
    hea = path.parent / (path.name + ".hea")
    header = parse_header(hea.read_text(encoding="latin-1"))

    groups: dict[str, list[int]] = {}
    for i, spec in enumerate(header.signals):
        groups.setdefault(spec.file_name, []).append(i)
    channels: list[np.ndarray | None] = [None] * header.n_signals
    for fname, idx in groups.items():
        decoded = decode_signal((path.parent / fname).read_bytes(), header, idx)
        for i, ch in zip(idx, decoded):
            channels[i] = ch

    ann_path = path.parent / (path.name + "." + annotator)
    annotations = []
    if ann_path.exists():
        annotations = parse_annotations(ann_path.read_bytes(), vf_labels, noise_labels)
    n = len(channels[0])
    annotations = [a for a in annotations if a.sample_index < n]
    return EcgRecord(header=header, channels=channels, annotations=annotations)


# --------------------------------------------------------------------------
# episodes


def rhythm_mask(record: EcgRecord) -> np.ndarray:
    """Per-sample rhythm codes: 0 NOT_VF, 1 VF, 2 NOISE.

    Each annotation holds until the next one; samples before the first
    annotation count as NOT_VF.
    """
    codes = {Rhythm.NOT_VF: 0, Rhythm.VF: 1, Rhythm.NOISE: 2}
    mask = np.zeros(record.n_samples, dtype=np.int8)
    anns = sorted(record.annotations, key=lambda a: a.sample_index)
    for a, b in zip(anns, anns[1:] + [None]):
        stop = record.n_samples if b is None else b.sample_index
        mask[a.sample_index:stop] = codes[a.rhythm_label]
    return mask


def extract_episodes(
    record: EcgRecord,
    episode_length_s: float = 5.0,
    hop_s: float = 1.0,
    channel: int = 0,
    vf_threshold: float = 0.5,
) -> list[EcgEpisode]:
    """Slide a window over one channel and label each full window.

    A window is VF when the fraction of its samples inside VF regions is
    strictly above ``vf_threshold``; windows touching a NOISE region are
    dropped.
    """
    if not 0 <= channel < len(record.channels):
        raise IndexError(
            f"channel {channel} out of range for a record with {len(record.channels)} channels"
        )
    fs = record.fs
    width = int(round(episode_length_s * fs))
    hop = int(round(hop_s * fs))
    if width < 1 or hop < 1:
        raise ValueError("episode length and hop must each span at least one sample")
    x = record.channels[channel]
    mask = rhythm_mask(record)
    vf = np.concatenate([[0], np.cumsum(mask == 1)])
    noise = np.concatenate([[0], np.cumsum(mask == 2)])

    episodes = []
    for start in range(0, len(x) - width + 1, hop):
        stop = start + width
        if noise[stop] - noise[start] > 0:
            continue
        frac = (vf[stop] - vf[start]) / width
        episodes.append(
            EcgEpisode(
                samples=x[start:stop].copy(),
                sampling_rate_hz=fs,
                episode_length_s=episode_length_s,
                label=Rhythm.VF if frac > vf_threshold else Rhythm.NOT_VF,
                source=record.header.record_name,
                start=start,
            )
        )
    return episodes


def _meta_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".meta")


def write_csv_episode(path: str | Path, episode: EcgEpisode) -> None:
    """Write ``path`` (one sample per line) and its ``.meta`` sidecar."""
    path = Path(path)
    path.write_text("".join(f"{v!r}\n" for v in episode.samples.tolist()))
    _meta_path(path).write_text(
        f"fs={episode.sampling_rate_hz!r}\n"
        f"T_e={episode.episode_length_s!r}\n"
        f"label={episode.label.value}\n"
        f"source={episode.source}\n"
        f"start={episode.start}\n"
    )


def read_csv_episode(path: str | Path) -> EcgEpisode:
    path = Path(path)
    meta: dict[str, str] = {}
    for ln in _meta_path(path).read_text().splitlines():
        if ln.strip() and not ln.startswith("#"):
            key, _, value = ln.partition("=")
            meta[key.strip()] = value.strip()
    try:
        fs = float(meta["fs"])
        label = Rhythm(meta["label"])
    except KeyError as exc:
        raise WfdbError(f"{_meta_path(path)}: missing {exc.args[0]!r}") from None
    except ValueError as exc:
        raise WfdbError(f"{_meta_path(path)}: {exc}") from None
    samples = np.loadtxt(path, delimiter=",", ndmin=1, dtype=float)
    te = float(meta.get("T_e", len(samples) / fs))
    return EcgEpisode(
        samples=samples,
        sampling_rate_hz=fs,
        episode_length_s=te,
        label=label,
        source=meta.get("source", path.stem),
        start=int(meta.get("start", 0)),
    )
