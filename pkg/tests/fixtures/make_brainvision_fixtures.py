"""Regenerate the hand-built BrainVision fixtures in this directory.

Sample values are listed literally below; the tests assert against the
same literals, not against anything produced by the package.
"""
import struct
from pathlib import Path

HERE = Path(__file__).parent

# frames are channel-fastest (multiplexed)
INT16_FRAMES = [
    (42, -7, 5),
    (0, 100, -3),
    (-32768, 32767, 1),
    (1, 2, 3),
]
FLOAT32_FRAMES = [
    (1.5, -0.25),
    (3000.0, 0.125),
    (-1.0, 7.75),
]

INT16_VHDR = """Brain Vision Data Exchange Header File Version 1.0
; hand-built fixture: 3 channels, 4 samples, INT_16

[Common Infos]
Codepage=UTF-8
DataFile=int16.eeg
MarkerFile=int16.vmrk
DataFormat=BINARY
DataOrientation=MULTIPLEXED
NumberOfChannels=3
SamplingInterval=1000

[Binary Infos]
BinaryFormat=INT_16

[Channel Infos]
; Ch<n>=<name>,<reference>,<resolution>,<unit>
Ch1=C3,,0.1,µV
Ch2=Cz,,0.5,µV
Ch3=EMG1,,0.002,mV

[Comment]
Amplifier settings are ignored by the parser.
"""

INT16_VMRK = """Brain Vision Data Exchange Marker File, Version 1.0

[Common Infos]
Codepage=UTF-8
DataFile=int16.eeg

[Marker Infos]
; Mk<n>=<type>,<description>,<position>,<size>,<channel>
Mk1=New Segment,,0,1,0,20240101000000000000
Mk2=Stimulus,S  1,1,1,0
Mk3=Stimulus,S  3,2,1,0
Mk4=Stimulus,S 99,3,1,0
"""

FLOAT32_VHDR = """Brain Vision Data Exchange Header File Version 1.0

[Common Infos]
DataFile=float32.eeg
MarkerFile=float32.vmrk
DataFormat=BINARY
DataOrientation=MULTIPLEXED
NumberOfChannels=2
SamplingInterval=500

[Binary Infos]
BinaryFormat=IEEE_FLOAT_32

[Channel Infos]
Ch1=FC3,,,µV
Ch2=FC4,,1,µV
"""

FLOAT32_VMRK = """Brain Vision Data Exchange Marker File, Version 1.0

[Marker Infos]
Mk1=Stimulus,S  5,2,1,0
"""


def main():
    (HERE / "int16.vhdr").write_text(INT16_VHDR, encoding="utf-8")
    (HERE / "int16.vmrk").write_text(INT16_VMRK, encoding="utf-8")
    (HERE / "int16.eeg").write_bytes(b"".join(struct.pack("<3h", *f) for f in INT16_FRAMES))
    (HERE / "float32.vhdr").write_text(FLOAT32_VHDR, encoding="utf-8")
    (HERE / "float32.vmrk").write_text(FLOAT32_VMRK, encoding="utf-8")
    (HERE / "float32.eeg").write_bytes(b"".join(struct.pack("<2f", *f) for f in FLOAT32_FRAMES))


if __name__ == "__main__":
    main()
