"""The thirteen acceptance criteria, one test each.

Run with ``pytest tests/test_acceptance.py``; a summary section lists one
PASS/FAIL line per criterion with its measured timing or counts.
"""
import math
import random
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
from hypothesis import given, settings

import oracles
from generators import timed_transcript, transcripts, two_blobs, untimed_transcript
from longscribe.align import levenshtein_distance, time_constrained_align
from longscribe.diarize import _canonical, cosine_similarity, hdbscan, merge_clusters
from longscribe.metrics import (
    EvalConfig,
    _permuted,
    cpwer,
    der,
    evaluate_recording,
    tcpwer,
    timed_speaker_streams,
)
from longscribe.pipeline import chunk_intervals, load_pairs, quality_filter_transcripts, token_budget
from longscribe.transcript import (
    Segment,
    Transcript,
    Word,
    parse_rich_stream,
    parse_seglst,
    quantize_transcript,
    render_rich_stream,
    serialize_seglst,
)

FIXTURES = Path(__file__).parent / 'fixtures'
GOLDEN = FIXTURES / 'golden'
COLLARS = (0, 0.25, 1, 5, 30)


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def relabel(t, names):
    return Transcript(t.recording_id, tuple(
        Segment(names[s.speaker_id], s.start, s.end, s.words, s.tag) for s in t.segments), t.duration)


def self_overlap_free(t):
    last = {}
    for s in t.segments:
        if s.start < last.get(s.speaker_id, -math.inf):
            return False
        last[s.speaker_id] = max(last.get(s.speaker_id, -math.inf), s.end)
    return True


# --------------------------------------------------------------------------

def test_c01_token_budget(record_property):
    with Clock() as c:
        value = token_budget(3600, 7.5)
    record_property('detail', f'{value} tokens in {c.seconds * 1e3:.3f} ms')
    assert value == 27000
    assert c.seconds < 1e-3


def test_c02_wer_oracle(record_property):
    rng = random.Random(2)
    with Clock() as c:
        for _ in range(1000):
            ref = [rng.choice('abc') for _ in range(rng.randint(0, 8))]
            hyp = [rng.choice('abc') for _ in range(rng.randint(0, 8))]
            assert levenshtein_distance(ref, hyp) == oracles.edit_cost(ref, hyp), (ref, hyp)
    record_property('detail', f'1000/1000 exact in {c.seconds:.2f} s')
    assert c.seconds < 10


def test_c03_cpwer_oracle(record_property):
    rng = random.Random(3)
    with Clock() as c:
        for _ in range(500):
            ref = untimed_transcript(rng, 5, 6)
            hyp = untimed_transcript(rng, 5, 6)
            got = cpwer(ref, hyp).breakdown
            assert (got.errors, got.ref_len) == oracles.oracle_cpwer(ref, hyp), (ref, hyp)
    record_property('detail', f'500/500 exact in {c.seconds:.2f} s')
    assert c.seconds < 30


def test_c04_tcpwer_oracle(record_property):
    rng = random.Random(4)
    with Clock() as c:
        for _ in range(200):
            grid = rng.choice([1.0, 0.25, 0.07])
            ref = timed_transcript(rng, 4, 5, grid=grid, untimed=0.25)
            hyp = timed_transcript(rng, 4, 5, grid=grid, untimed=0.25)
            collar = rng.choice([0, 0.07, 0.5, 1, 2.5, 5])
            got = tcpwer(ref, hyp, collar).breakdown
            assert (got.errors, got.ref_len) == oracles.oracle_tcpwer(ref, hyp, collar), (ref, hyp, collar)
            # The generator never overlaps a speaker with itself, which is
            # when an unbounded collar reduces to cpWER.
            assert self_overlap_free(ref) and self_overlap_free(hyp)
            wide, plain = tcpwer(ref, hyp, 1e6), cpwer(ref, hyp)
            assert wide.breakdown == plain.breakdown and wide.rate == plain.rate
    record_property('detail', f'200/200 exact, collar 1e6 == cpWER, {c.seconds:.2f} s')
    assert c.seconds < 60


def test_c05_der_properties(record_property):
    rng = random.Random(5)
    relabelings = 0
    while relabelings < 100:
        ref = timed_transcript(rng, 4, 6, grid=rng.choice([1.0, 0.25, 0.07]))
        hyp = timed_transcript(rng, 4, 6, grid=0.25)
        if not ref.segments:
            continue
        collar = rng.choice([0, 0.25, 1])
        base = der(ref, hyp, collar)
        names = [f'x{k}' for k in range(10)]
        rng.shuffle(names)
        r_names = {s: names[k] for k, s in enumerate(sorted(ref.speakers))}
        h_names = {s: names[k + 5] for k, s in enumerate(sorted(hyp.speakers))}
        moved = der(relabel(ref, r_names), relabel(hyp, h_names), collar)
        assert moved.rate - base.rate == 0, (ref, hyp, collar)
        assert der(ref, relabel(ref, r_names), collar).rate == 0
        relabelings += 1
    half = der(Transcript('r', (Segment('A', 0, 10),)),
               Transcript('r', (Segment('X', 0, 5), Segment('Y', 5, 10))), collar=0)
    assert half.confusion == 5 and half.rate == Fraction(1, 2)
    record_property('detail', '100 relabelings unchanged, perfect = 0, half-confusion = 1/2')


def test_c06_collar_monotonicity(record_property):
    rng = random.Random(6)
    checked = 0
    while checked < 100:
        grid = rng.choice([1.0, 0.25, 0.07])
        ref = timed_transcript(rng, 4, 6, grid=grid, untimed=0.2)
        hyp = timed_transcript(rng, 4, 6, grid=grid, untimed=0.2)
        if not ref.segments:
            continue
        t_rates = [tcpwer(ref, hyp, c).rate for c in COLLARS]
        d_rates = [der(ref, hyp, c).rate for c in COLLARS]
        for rates in (t_rates, d_rates):
            assert all(a >= b for a, b in zip(rates, rates[1:])), (ref, hyp, rates)
        checked += 1
    record_property('detail', '100 instances, 0 violations')


def test_c07_quality_filter_boundaries(record_property):
    verdicts = {}
    for name in ('filter_boundary_keep', 'filter_too_many_bad', 'filter_low_speech'):
        ref, hyp, total = load_pairs((FIXTURES / f'{name}.json').read_text())
        verdicts[name] = quality_filter_transcripts(ref, hyp, total).keep
    record_property('detail', ', '.join(f'{k}={v}' for k, v in verdicts.items()))
    assert verdicts == {'filter_boundary_keep': True, 'filter_too_many_bad': False, 'filter_low_speech': False}


def test_c08_hdbscan(record_property):
    X, truth = two_blobs(8, per_blob=20, dim=8, spread=0.05)
    # Blob centres are sqrt(2) apart; the spread is per coordinate.
    assert math.sqrt(2) >= 10 * 0.05 * math.sqrt(8)
    c = hdbscan(X, min_cluster_size=5)
    assert c.k == 2 and c.noise_fraction == 0
    assert oracles.partition(c.labels) == oracles.partition(truth)

    rng = np.random.default_rng(8)
    for t in range(100):
        n = int(rng.integers(2, 13))
        Y = rng.normal(size=(n, 3)) + rng.integers(0, 3, size=(n, 1)) * 3.0
        mcs, ms, metric = int(rng.integers(2, 5)), int(rng.integers(1, 4)), ('euclidean', 'cosine')[t % 2]
        got = oracles.partition(hdbscan(Y, mcs, ms, metric).labels)
        assert got in oracles.oracle_eom(oracles.oracle_condensed(Y, mcs, ms, metric))

    Z, _ = two_blobs(9, per_blob=12, spread=0.3)
    Z = np.concatenate([Z, rng.normal(size=(6, Z.shape[1]))])
    base = oracles.partition(hdbscan(Z, 4, 3).labels)
    for _ in range(50):
        perm = rng.permutation(len(Z))
        labels = hdbscan(Z[perm], 4, 3).labels
        back = np.empty_like(labels)
        back[perm] = labels
        assert oracles.partition(back) == base
    record_property('detail', 'two blobs k=2 no noise, 100 EOM oracle matches, 50 shuffles')


def test_c09_merge_postcondition(record_property):
    rng = np.random.default_rng(9)
    merges = 0
    for _ in range(100):
        k = int(rng.integers(1, 9))
        n = int(rng.integers(k, 30))
        data = rng.normal(size=(n, 4)) + np.array([1.5, 0, 0, 0])
        labels = np.array(list(range(k)) + list(rng.integers(-1, k, size=n - k)))
        before = _canonical(labels, data)
        after = merge_clusters(before)
        merges += before.k - after.k
        for i in range(after.k):
            for j in range(i + 1, after.k):
                assert cosine_similarity(after.centroids[i], after.centroids[j]) <= 0.67
    record_property('detail', f'100 cluster sets, {merges} merges, no pair above 0.67')


_round_trips = []


@settings(max_examples=1000, database=None)
@given(transcripts())
def _round_trip(t):
    assert parse_seglst(serialize_seglst(t)) == t
    q = quantize_transcript(t)
    assert parse_rich_stream(render_rich_stream(t), t.recording_id, q.duration) == q
    _round_trips.append(1)


def test_c10_round_trips(record_property):
    _round_trips.clear()
    _round_trip()
    record_property('detail', f'{len(_round_trips)} transcripts')
    assert len(_round_trips) >= 1000


def test_c11_chunker(record_property):
    rng = random.Random(11)
    durations = [240 * rng.randint(1, 30) for _ in range(20)]
    durations += [rng.uniform(0, 36000) for _ in range(70)]
    durations += [rng.randint(1, 5000) / 100 for _ in range(10)]
    for d in durations:
        chunks = chunk_intervals(d)
        assert chunks[0][0] == 0 and chunks[-1][1] == d
        assert all(b == c for (_, b), (c, _) in zip(chunks, chunks[1:]))
        assert all(b - a == 240 for a, b in chunks[:-1])
        assert 0 < chunks[-1][1] - chunks[-1][0] <= 240
    record_property('detail', f'{len(durations)} durations partitioned')


def test_c12_golden_report(tmp_path, record_property):
    with Clock() as c:
        subprocess.run([sys.executable, '-m', 'longscribe.cli', 'eval', str(GOLDEN / 'ref'), str(GOLDEN / 'hyp'),
                        '--out', str(tmp_path)], check=True)
    for name in ('report.txt', 'report.json'):
        assert (tmp_path / name).read_bytes() == (GOLDEN / name).read_bytes(), name
    record_property('detail', f'byte-identical, end to end {c.seconds:.2f} s')
    assert c.seconds < 60


# --------------------------------------------------------------------------
# Long-form performance

def long_pair(seed, minutes=60):
    """Four speakers talking in turns for ``minutes``, with a noisy hypothesis."""
    rng = random.Random(seed)
    vocab = [f'w{k}' for k in range(400)]
    speakers = ['A', 'B', 'C', 'D']
    names = dict(zip(speakers, ['s3', 's1', 's4', 's2']))
    horizon = minutes * 60
    last_end = dict.fromkeys(speakers, 0.0)
    ref, hyp = [], []
    t = 0.0
    while True:
        spk = rng.choice(speakers)
        t = max(t, last_end[spk])
        words, w = [], t
        for _ in range(rng.randint(5, 40)):
            d = rng.randint(15, 45) / 100
            words.append(Word(rng.choice(vocab), round(w, 2), round(w + d, 2)))
            w = round(w + d + rng.randint(0, 10) / 100, 2)
        if words[-1].end > horizon:
            break
        seg = Segment(spk, words[0].start, words[-1].end, tuple(words))
        ref.append(seg)
        last_end[spk] = seg.end
        # Occasional cross-talk: the next turn may start before this one ends.
        t = round(seg.end + rng.randint(-100, 250) / 100, 2)

        out = []
        for x in words:
            r = rng.random()
            if r < 0.07:
                continue
            out.append(Word(rng.choice(vocab) if r < 0.14 else x.text, x.start, x.end))
            if rng.random() < 0.04:
                out.append(Word(rng.choice(vocab), x.end, x.end))
        if not out:
            continue
        shift = rng.randint(-30, 30) / 100
        shift = max(shift, -out[0].start)
        out = tuple(Word(x.text, round(x.start + shift, 2), round(x.end + shift, 2)) for x in out)
        who = names[spk] if rng.random() > 0.05 else rng.choice(list(names.values()))
        if rng.random() < 0.1:
            out = tuple(Word(x.text) for x in out)
        hyp.append(Segment(who, round(seg.start + shift, 2), round(seg.end + shift, 2), out))
    return Transcript('long', tuple(ref), float(horizon)), Transcript('long', tuple(hyp))


def window(t, seconds):
    return Transcript(t.recording_id, tuple(s for s in t.segments if s.end <= seconds))


def test_c13_long_form(record_property):
    ref, hyp = long_pair(13)
    n_ref, n_hyp = len(ref.words()), len(hyp.words())
    assert 8000 <= n_ref <= 10000 and 7000 <= n_hyp <= 10000
    assert len(ref.speakers) == 4
    with Clock() as c:
        scores = evaluate_recording(ref, hyp, EvalConfig())
    assert scores.der is not None and scores.tcpwer.breakdown.ref_len == n_ref

    # Banded and full DP agree on every speaker pair of a five-minute slice,
    # and therefore on the slice's tcpWER.
    r5, h5 = window(ref, 300), window(hyp, 300)
    R, H = timed_speaker_streams(r5), timed_speaker_streams(h5)
    pairs = 0
    for collar in (0, 0.5, 5.0):
        for rs in R.values():
            for hs in H.values():
                assert time_constrained_align(rs, hs, collar) == time_constrained_align(rs, hs, collar, banded=False)
                pairs += 1
        full = _permuted(R, H, lambda r, h: time_constrained_align(r, h, collar, banded=False))
        banded = tcpwer(r5, h5, collar)
        assert full.breakdown == banded.breakdown and full.mapping == banded.mapping
    record_property('detail', f'{n_ref}/{n_hyp} words, four metrics in {c.seconds:.2f} s, '
                              f'{pairs} slice pairs banded == full')
    assert c.seconds < 30
