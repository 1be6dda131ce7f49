"""Write a small annotated record in WFDB form, read it back, cut episodes.

Run:  python3 demos/wfdb_roundtrip.py
"""

import struct
import tempfile
from pathlib import Path

import numpy as np

from vfdetect.ingest import Rhythm, encode_212, extract_episodes, read_record
from vfdetect.synth import make_record

rec = make_record(
    [(Rhythm.NOT_VF, 10), (Rhythm.VF, 8), (Rhythm.NOISE, 2), (Rhythm.NOT_VF, 6)], seed=2, name="demo"
)
fs, gain = 250, 200
adu = np.clip(np.round(rec.channels[0] * gain), -2048, 2047).astype(int)

d = Path(tempfile.mkdtemp())
(d / "demo.hea").write_text(f"demo 1 {fs} {len(adu)}\ndemo.dat 212 {gain}/mV 12 0 0 0 0 ECG\n")
(d / "demo.dat").write_bytes(encode_212(adu))


def ann(code, delta):
    return struct.pack("<H", (code << 10) | delta)


# Rhythm changes as '+' (code 28) annotations with an aux string.
atr = bytearray()
last = 0
for a, text in zip(rec.annotations, ["(N", "(VF", "(NOISE", "(N"]):
    gap = a.sample_index - last
    if gap > 1023:
        atr += ann(59, 0) + struct.pack("<HH", gap >> 16, gap & 0xFFFF)
        gap = 0
    aux = text.encode()
    atr += ann(28, gap) + ann(63, len(aux)) + aux + (b"\0" if len(aux) % 2 else b"")
    last = a.sample_index
atr += b"\0\0"
(d / "demo.atr").write_bytes(bytes(atr))

back = read_record(d / "demo")
print("header:", back.header.record_name, back.header.n_signals, "signal at", back.fs, "Hz,", back.n_samples, "samples")
print("max decode error (mV):", np.max(np.abs(back.channels[0] - adu / gain)))
print("rhythm changes:", [(a.sample_index, a.rhythm_label.value) for a in back.annotations])

eps = extract_episodes(back, episode_length_s=5, hop_s=1)
print(f"\n{len(eps)} five-second episodes (windows touching noise are dropped):")
print(" ".join(f"{e.start // fs}s:{'VF' if e.is_vf else '--'}" for e in eps))
