import math
import random
from fractions import Fraction

import pytest

import oracles
from generators import timed_transcript, untimed_transcript
from longscribe.errors import EmptyReference, MissingTimings
from longscribe.metrics import (
    EvalConfig,
    cpwer,
    der,
    evaluate_corpus,
    evaluate_recording,
    normalize_word,
    pair_transcripts,
    tcpwer,
    wer,
)
from longscribe.report import percent, render_document, render_table
from longscribe.transcript import AcousticTag, Segment, Transcript, Word


def seg(spk, start, end, text='', tag=None):
    return Segment(spk, start, end, tuple(text.split()), tag)


def tr(*segments, rid='r'):
    return Transcript(rid, tuple(segments))


def relabel(t, mapping):
    return Transcript(t.recording_id, tuple(
        Segment(mapping[s.speaker_id], s.start, s.end, s.words, s.tag) for s in t.segments), t.duration)


REF = tr(seg('A', 0, 4, 'the cat sat down'), seg('B', 4, 6, 'yes'), seg('A', 6, 9, 'on the mat'),
         seg('B', 9, 10, tag=AcousticTag.Noise))


# --------------------------------------------------------------------------
# WER

def test_wer_ignores_labels():
    assert wer(REF, relabel(REF, {'A': 'x', 'B': 'y'})).rate == 0


def test_wer_empty_hypothesis():
    ref = tr(seg('A', 0, 10, ' '.join('w%d' % i for i in range(10))))
    b = wer(ref, tr())
    assert b.rate == 1 and b.summary.deletions == 10


def test_wer_empty_reference_conventions():
    assert wer(tr(), tr()).rate == 0
    assert wer(tr(), tr(seg('A', 0, 1, 'a'))).rate == math.inf
    assert percent(math.inf) == 'undefined'


def test_tags_are_not_words():
    hyp = tr(seg('A', 0, 4, 'the cat sat down'), seg('B', 4, 6, 'yes'), seg('A', 6, 9, 'on the mat'))
    assert wer(REF, hyp).rate == 0 and cpwer(REF, hyp).rate == 0


def test_normalization():
    assert normalize_word('Hello,') == 'hello'
    assert normalize_word('"Don\'t!"') == 'dont'
    assert normalize_word('...') == ''
    ref = tr(seg('A', 0, 2, 'Hello, world.'))
    hyp = tr(seg('A', 0, 2, 'hello world'))
    assert wer(ref, hyp).rate == 1
    assert wer(ref, hyp, normalize=True).rate == 0
    assert cpwer(ref, hyp, normalize=True).rate == 0
    assert tcpwer(ref, hyp, normalize=True).rate == 0


def test_wer_matches_oracle():
    rng = random.Random(11)
    for _ in range(100):
        r, h = timed_transcript(rng, 3, 6), timed_transcript(rng, 3, 6)
        assert (wer(r, h).summary.errors, wer(r, h).summary.ref_len) == oracles.oracle_wer(r, h)


# --------------------------------------------------------------------------
# cpWER / tcpWER

def test_cpwer_recovers_renaming():
    p = cpwer(REF, relabel(REF, {'A': 'S2', 'B': 'S1'}))
    assert p.rate == 0 and p.mapping == {'A': 'S2', 'B': 'S1'}


def test_cpwer_spurious_speaker_costs_insertions():
    ref = tr(seg('A', 0, 3, 'a b c'))
    hyp = tr(seg('X', 0, 3, 'a b c'), seg('Y', 3, 4, 'd e'))
    p = cpwer(ref, hyp)
    assert p.breakdown.summary.insertions >= 2
    assert p.rate == Fraction(2, 3)


def test_cpwer_matches_oracle():
    rng = random.Random(5)
    for _ in range(100):
        r, h = untimed_transcript(rng, 5, 6), untimed_transcript(rng, 5, 6)
        p = cpwer(r, h)
        assert (p.breakdown.summary.errors, p.breakdown.summary.ref_len) == oracles.oracle_cpwer(r, h)


def test_tcpwer_matches_oracle_with_estimated_timings():
    rng = random.Random(6)
    for _ in range(100):
        r = timed_transcript(rng, 3, 5, grid=0.5, untimed=0.3)
        h = timed_transcript(rng, 3, 5, grid=0.5, untimed=0.3)
        for collar in (0, 0.5, 2):
            assert tcpwer(r, h, collar).breakdown.summary.errors == oracles.oracle_tcpwer(r, h, collar)[0]


def test_tcpwer_shifted_hypothesis():
    collar = 5.0
    ref = tr(seg('A', 0, 2, 'a b'), seg('B', 2, 3, 'c'))
    hyp = Transcript('r', tuple(
        Segment(s.speaker_id, s.start + 2 * collar + 3, s.end + 2 * collar + 3, s.words) for s in ref.segments))
    assert tcpwer(ref, hyp, collar).rate == 2
    assert cpwer(ref, hyp).rate == 0


def test_tcpwer_missing_timings():
    ref = tr(seg('A', 0, 2, 'a b'))
    with pytest.raises(MissingTimings):
        tcpwer(ref, ref, timing_strategy=None)
    timed = tr(Segment('A', 0, 2, (Word('a', 0, 1), Word('b', 1, 2))))
    assert tcpwer(timed, timed, timing_strategy=None).rate == 0


def test_tcpwer_infinite_collar_equals_cpwer():
    rng = random.Random(8)
    for _ in range(100):
        r, h = timed_transcript(rng, 4, 5), timed_transcript(rng, 4, 5)
        a, b = tcpwer(r, h, 1e6), cpwer(r, h)
        assert a.breakdown == b.breakdown
        assert tcpwer(r, h, math.inf).breakdown == b.breakdown


def test_permutation_invariance():
    rng = random.Random(9)
    for _ in range(50):
        r, h = timed_transcript(rng, 4, 5), timed_transcript(rng, 4, 5)
        spk = sorted({s.speaker_id for s in h.segments})
        names = [f'n{k}' for k in range(len(spk))]
        rng.shuffle(names)
        h2 = relabel(h, dict(zip(spk, names)))
        assert cpwer(r, h).rate == cpwer(r, h2).rate
        assert tcpwer(r, h, 1).rate == tcpwer(r, h2, 1).rate
        if r.segments:
            assert der(r, h).rate == der(r, h2).rate


def test_tcpwer_never_below_cpwer():
    rng = random.Random(10)
    for _ in range(100):
        r, h = timed_transcript(rng, 3, 5), timed_transcript(rng, 3, 5)
        if r.words():
            assert tcpwer(r, h, 0.5).rate >= cpwer(r, h).rate


# --------------------------------------------------------------------------
# DER

def test_der_permuted_labels():
    assert der(REF, relabel(REF, {'A': 'B', 'B': 'A'})).rate == 0


def test_der_all_missed():
    d = der(tr(seg('A', 0, 10)), tr(), collar=0)
    assert (d.missed, d.rate) == (10, 1)


def test_der_half_confusion():
    d = der(tr(seg('A', 0, 10)), tr(seg('X', 0, 5), seg('Y', 5, 10)), collar=0)
    assert d.confusion == 5 and d.rate == Fraction(1, 2)
    assert d.mapping == {'A': 'X'}


def test_der_empty_reference():
    with pytest.raises(EmptyReference):
        der(tr(seg('A', 0, 1, tag=AcousticTag.Music)), tr(seg('A', 0, 1)))


def test_der_collar_excludes_boundaries():
    ref = tr(seg('A', 0, 10))
    hyp = tr(seg('A', 0.2, 9.9))
    assert der(ref, hyp, 0).rate == Fraction(3, 100)
    assert der(ref, hyp, 0.25).rate == 0


def test_der_own_overlap_counts_once():
    ref = tr(seg('A', 0, 4), seg('A', 2, 6))
    d = der(ref, tr(seg('X', 0, 6)), collar=0)
    assert d.ref_speech == 6 and d.rate == 0


def test_der_matches_grid_oracle():
    rng = random.Random(12)
    checked = 0
    for _ in range(150):
        r = timed_transcript(rng, 3, 4, grid=rng.choice([0.25, 0.01, 1.0]))
        h = timed_transcript(rng, 3, 4, grid=rng.choice([0.25, 0.01, 1.0]))
        if not r.segments:
            continue
        for collar in (0, 0.25, 1):
            d = der(r, h, collar)
            assert (d.missed * 100, d.false_alarm * 100, d.confusion * 100, d.ref_speech * 100) \
                == oracles.oracle_der(r, h, collar)
            checked += 1
    assert checked > 100


def test_der_conservation():
    rng = random.Random(13)
    for _ in range(50):
        r, h = timed_transcript(rng, 3, 5), timed_transcript(rng, 3, 5)
        if r.segments:
            d = der(r, h, 0)
            assert min(d.missed, d.false_alarm, d.confusion) >= 0
            assert d.error == d.missed + d.false_alarm + d.confusion


# --------------------------------------------------------------------------
# Corpus

def test_micro_average():
    def rec(rid, n, errors):
        ref = tr(seg('A', 0, n, ' '.join(['w'] * n)), rid=rid)
        hyp = tr(seg('A', 0, n, ' '.join(['w'] * (n - errors) + ['x'] * errors)), rid=rid)
        return ref, hyp

    report = evaluate_corpus([rec('a', 10, 5), rec('b', 90, 9)])
    wer_avg = report.average.wer
    assert Fraction(wer_avg.errors, wer_avg.ref_len) == Fraction(14, 100)
    assert [r.recording_id for r in report.rows] == ['a', 'b']


def test_pairing_reports_missing():
    a, b, c = tr(rid='a'), tr(rid='b'), tr(rid='c')
    pairs, missing = pair_transcripts([a, b], [b, c])
    assert [p[0].recording_id for p in pairs] == ['b']
    assert [str(m) for m in missing] == ['a: no hypothesis', 'c: no reference']
    report = evaluate_corpus(pairs, missing=missing)
    assert report.missing == ('a: no hypothesis', 'c: no reference')


def test_identical_corpus_scores_zero():
    rng = random.Random(14)
    refs = [timed_transcript(rng, 3, 5, recording_id=f'r{k}') for k in range(6)]
    report = evaluate_corpus([(t, t) for t in refs])
    for row in report.rows:
        assert row.wer.rate == row.cpwer.rate == row.tcpwer.rate == 0
        assert row.der is None or row.der.rate == 0


def test_parallel_equals_serial():
    rng = random.Random(15)
    pairs = [(timed_transcript(rng, 3, 5, recording_id=f'r{k}'), timed_transcript(rng, 3, 5, recording_id=f'r{k}'))
             for k in range(8)]
    serial = evaluate_corpus(pairs, EvalConfig(jobs=1))
    parallel = evaluate_corpus(list(reversed(pairs)), EvalConfig(jobs=3))
    assert render_table(serial) == render_table(parallel)
    assert render_document(serial) == render_document(parallel)


def test_recording_without_reference_speech():
    ref = tr(seg('A', 0, 1, tag=AcousticTag.Silence))
    row = evaluate_recording(ref, tr(seg('A', 0, 1, 'a')))
    assert row.der is None and row.wer.rate == math.inf
    table = render_table(evaluate_corpus([(ref, tr(seg('A', 0, 1, 'a')))]))
    assert 'undefined' in table


def test_table_header_echoes_config():
    report = evaluate_corpus([(REF, REF)], EvalConfig(collar_tcp=2.0, collar_der=0.5, normalize=True))
    first = render_table(report).splitlines()[0]
    assert first.startswith('# toolkit=longscribe version=')
    assert 'collar_tcp=2.0 collar_der=0.5 normalize=true timing_strategy=equidistant' in first
