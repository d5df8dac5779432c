from __future__ import division, print_function

import struct

import matplotlib
matplotlib.use('Agg')

import pytest


def box(btype, payload=b'', large=False):
    """ISO-BMFF box; `large` writes the 64-bit size form."""
    if large:
        return struct.pack('>I4sQ', 1, btype.encode('latin-1'), 16 + len(payload)) + payload
    return struct.pack('>I4s', 8 + len(payload), btype.encode('latin-1')) + payload


def full_box(btype, version, payload, large=False):
    return box(btype, struct.pack('>B3x', version) + payload, large)


def mdhd(timescale, version=0, duration=0):
    language = struct.pack('>HH', 0x55c4, 0)
    if version == 0:
        fields = struct.pack('>IIII', 0, 0, timescale, duration)
    else:
        fields = struct.pack('>QQIQ', 0, 0, timescale, duration)
    return full_box('mdhd', version, fields + language)


def hdlr(handler='vide'):
    return full_box('hdlr', 0, struct.pack('>I4s12x', 0, handler.encode('latin-1'))
                    + b'VideoHandler\x00')


def stts(entries):
    payload = struct.pack('>I', len(entries))
    for count, delta in entries:
        payload += struct.pack('>II', count, delta)
    return full_box('stts', 0, payload)


def stsz(sample_count, sample_size=1):
    # constant sample size, so no per-sample table follows
    return full_box('stsz', 0, struct.pack('>II', sample_size, sample_count))


def trak(timescale, entries, version=0, handler='vide', large=False, sample_count=None):
    sizes = b'' if sample_count is None else stsz(sample_count)
    stbl = box('stbl', stts(entries) + sizes, large)
    minf = box('minf', box('vmhd', b'\x00' * 12) + stbl)
    mdia = box('mdia', mdhd(timescale, version) + hdlr(handler) + minf, large)
    return box('trak', box('tkhd', b'\x00' * 84) + mdia)


def mp4(timescale, entries, version=0, handler='vide', large=False, extra_traks=(),
        sample_count=None):
    """
    A minimal MP4 file whose only payload is timing metadata.

    Parameters
    ----------
    entries : list of (count, delta)
        stts run lengths.
    extra_traks : sequence of bytes
        Tracks placed before the generated one.
    sample_count : int, optional
        If given, an stsz box declaring this many samples is added.
    """
    ftyp = box('ftyp', b'isom' + struct.pack('>I', 512) + b'isomiso2mp41')
    moov = box('moov', box('mvhd', b'\x00' * 100) + b''.join(extra_traks)
               + trak(timescale, entries, version, handler, large, sample_count), large)
    return ftyp + moov + box('mdat', b'\x00' * 16)


def cumulative(entries):
    """Sample start times written out one sample at a time."""
    times, t = [], 0
    for count, delta in entries:
        for _ in range(count):
            times.append(t)
            t += delta
    return times


@pytest.fixture
def mp4_builder():
    return mp4
