"""
Multi-speaker transcription metrics.

* WER ignores speakers and timing.
* cpWER concatenates the words of each speaker and scores under the
  error-minimizing injective speaker mapping.
* tcpWER is cpWER where words may only be paired within a temporal collar.
* DER measures missed speech, false alarm and speaker confusion time.

Rates are exact: WER-family rates are ``Fraction(errors, ref_len)`` and DER
works on exact rationals of the (binary) float times.
"""
import concurrent.futures
import logging
import math
import unicodedata
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from longscribe.align import (
    TICKS_PER_SECOND,
    EditSummary,
    levenshtein_align,
    levenshtein_distance,
    solve_assignment,
    time_constrained_align,
    to_ticks,
)
from longscribe.errors import EmptyReference, MissingPair, MissingTimings
from longscribe.transcript import Transcript, estimate_word_timings

logger = logging.getLogger(__name__)

__all__ = [
    'WerBreakdown',
    'PermutedWer',
    'DerBreakdown',
    'RecordingScores',
    'MetricReport',
    'EvalConfig',
    'wer',
    'cpwer',
    'tcpwer',
    'der',
    'evaluate_recording',
    'evaluate_corpus',
    'pair_transcripts',
    'normalize_word',
]

DEFAULT_COLLAR_TCP = 5.0
DEFAULT_COLLAR_DER = 0.25


def _rate(errors, length):
    if length == 0:
        return Fraction(0) if errors == 0 else math.inf
    return Fraction(errors, length)


@dataclass(frozen=True)
class WerBreakdown:
    summary: EditSummary

    @property
    def errors(self) -> int:
        return self.summary.errors

    @property
    def ref_len(self) -> int:
        return self.summary.ref_len

    @property
    def rate(self):
        """Exact rate; ``math.inf`` when the reference is empty but the hypothesis is not."""
        return _rate(self.errors, self.ref_len)


@dataclass(frozen=True)
class PermutedWer:
    mapping: dict
    breakdown: WerBreakdown

    @property
    def rate(self):
        return self.breakdown.rate


@dataclass(frozen=True)
class DerBreakdown:
    missed: Fraction
    false_alarm: Fraction
    confusion: Fraction
    ref_speech: Fraction
    mapping: dict = field(default_factory=dict)

    @property
    def error(self):
        return self.missed + self.false_alarm + self.confusion

    @property
    def rate(self):
        return self.error / self.ref_speech


def normalize_word(text: str) -> str:
    """Lowercase and drop every Unicode punctuation character."""
    return ''.join(c for c in text.lower() if not unicodedata.category(c).startswith('P'))


def _normalized(texts, normalize):
    if not normalize:
        return list(texts)
    return [t for t in (normalize_word(t) for t in texts) if t]


# --------------------------------------------------------------------------
# WER family

def wer(ref: Transcript, hyp: Transcript, normalize: bool = False) -> WerBreakdown:
    ref_words = _normalized((w.text for w in ref.words()), normalize)
    hyp_words = _normalized((w.text for w in hyp.words()), normalize)
    return WerBreakdown(levenshtein_align(ref_words, hyp_words))


def speaker_streams(t: Transcript, normalize: bool = False) -> dict:
    """speaker -> words in canonical segment order (speakers without words omitted)."""
    streams = {}
    for s in t.segments:
        if s.words:
            streams.setdefault(s.speaker_id, []).extend(s.texts)
    streams = {k: _normalized(v, normalize) for k, v in streams.items()}
    return {k: streams[k] for k in sorted(streams) if streams[k]}


def timed_speaker_streams(t: Transcript, normalize: bool = False,
                          timing_strategy: Optional[str] = 'equidistant') -> dict:
    """speaker -> (text, start, end) triples sorted by start.

    Segments without word timings get pseudo timings from
    ``timing_strategy``; with ``timing_strategy=None`` they raise
    :class:`MissingTimings`.
    """
    streams = {}
    for s in t.segments:
        if not s.words:
            continue
        if not s.has_word_timings:
            if timing_strategy is None:
                raise MissingTimings(
                    f'{t.recording_id}: segment [{s.start}, {s.end}] of {s.speaker_id} '
                    f'has no word timings and interpolation is disabled')
            s = estimate_word_timings(s, timing_strategy)
        out = streams.setdefault(s.speaker_id, [])
        for w in s.words:
            text = normalize_word(w.text) if normalize else w.text
            if text:
                out.append((text, w.start, w.end))
    result = {}
    for k in sorted(streams):
        if streams[k]:
            # Stable: equal starts keep canonical order.
            result[k] = sorted(streams[k], key=lambda w: w[1])
    return result


def _permuted(ref_streams, hyp_streams, pair_summary) -> PermutedWer:
    ref_spk = list(ref_streams)
    hyp_spk = list(hyp_streams)
    summaries = [[pair_summary(ref_streams[r], hyp_streams[h]) for h in hyp_spk] for r in ref_spk]
    cost = [[s.errors for s in row] for row in summaries]
    assignment = solve_assignment(
        cost,
        [len(ref_streams[r]) for r in ref_spk],
        [len(hyp_streams[h]) for h in hyp_spk],
    )
    total = EditSummary()
    for i, r in enumerate(ref_spk):
        if i in assignment.mapping:
            total += summaries[i][assignment.mapping[i]]
        else:
            total += EditSummary.all_deleted(len(ref_streams[r]))
    matched = set(assignment.mapping.values())
    for j, h in enumerate(hyp_spk):
        if j not in matched:
            total += EditSummary.all_inserted(len(hyp_streams[h]))
    assert total.errors == assignment.total_cost
    mapping = {ref_spk[i]: hyp_spk[j] for i, j in assignment.mapping.items()}
    return PermutedWer(mapping, WerBreakdown(total))


def cpwer(ref: Transcript, hyp: Transcript, normalize: bool = False) -> PermutedWer:
    return _permuted(
        speaker_streams(ref, normalize),
        speaker_streams(hyp, normalize),
        levenshtein_align,
    )


def tcpwer(ref: Transcript, hyp: Transcript, collar: float = DEFAULT_COLLAR_TCP,
           normalize: bool = False, timing_strategy: Optional[str] = 'equidistant') -> PermutedWer:
    """cpWER with per-pair costs from :func:`time_constrained_align`.

    With an infinite collar this equals :func:`cpwer` whenever no speaker has
    overlapping segments of its own (then time order and canonical order of
    each speaker's words coincide).
    """
    return _permuted(
        timed_speaker_streams(ref, normalize, timing_strategy),
        timed_speaker_streams(hyp, normalize, timing_strategy),
        lambda r, h: time_constrained_align(r, h, collar),
    )


# --------------------------------------------------------------------------
# DER

def _exact(seconds):
    return Fraction(to_ticks(seconds), TICKS_PER_SECOND)


def _speech_segments(t: Transcript):
    return [(s.speaker_id, _exact(s.start), _exact(s.end))
            for s in t.segments if s.is_speech and s.end > s.start]


def _elementary_intervals(ref_segs, hyp_segs, collar):
    """Yield ``(duration, ref_speakers, hyp_speakers, scored)`` over the timeline.

    The timeline is cut at every segment boundary and at every collar edge;
    an interval is unscored when it lies within ``collar`` of a reference
    segment boundary.
    """
    events = {}

    def add(time, key, delta):
        events.setdefault(time, []).append((key, delta))

    for spk, start, end in ref_segs:
        add(start, ('r', spk), 1)
        add(end, ('r', spk), -1)
        if collar > 0:
            for b in (start, end):
                add(b - collar, ('zone',), 1)
                add(b + collar, ('zone',), -1)
    for spk, start, end in hyp_segs:
        add(start, ('h', spk), 1)
        add(end, ('h', spk), -1)

    active = {}
    times = sorted(events)
    for k, time in enumerate(times):
        for key, delta in events[time]:
            active[key] = active.get(key, 0) + delta
        if k + 1 == len(times):
            break
        d = times[k + 1] - time
        ref_now = frozenset(key[1] for key, n in active.items() if n > 0 and key[0] == 'r')
        hyp_now = frozenset(key[1] for key, n in active.items() if n > 0 and key[0] == 'h')
        if not ref_now and not hyp_now:
            continue
        yield d, ref_now, hyp_now, active.get(('zone',), 0) == 0


def der(ref: Transcript, hyp: Transcript, collar: float = DEFAULT_COLLAR_DER) -> DerBreakdown:
    """Diarization error rate.

    The speaker mapping maximizes total ref/hyp co-activity time over the
    whole recording, ties going to the mapping with more co-activity
    outside the collar zones. Errors are counted outside the no-score zones of
    ``collar`` seconds around every reference boundary; the denominator is
    the full reference speaker time, so a wider collar never raises the
    rate. A speaker's own overlapping segments count once.
    """
    if collar < 0:
        raise ValueError(f'collar must be >= 0, got {collar}')
    collar = _exact(collar)
    ref_segs = _speech_segments(ref)
    hyp_segs = _speech_segments(hyp)
    intervals = list(_elementary_intervals(ref_segs, hyp_segs, collar))
    ref_speech = sum((d * len(R) for d, R, H, _ in intervals), Fraction(0))
    if ref_speech == 0:
        raise EmptyReference(f'{ref.recording_id}: reference has no speech time')

    ref_spk = sorted({s for s, _, _ in ref_segs})
    hyp_spk = sorted({s for s, _, _ in hyp_segs})
    ri = {s: i for i, s in enumerate(ref_spk)}
    hi = {s: j for j, s in enumerate(hyp_spk)}
    # Co-activity over the whole timeline decides the mapping. Ties are broken
    # by co-activity outside the collar zones, which does not depend on labels,
    # so renaming speakers never changes the rate. ``scale`` exceeds any
    # possible scored total, which makes the weighting lexicographic.
    scale = ref_speech + 1
    overlap = [[Fraction(0)] * len(hyp_spk) for _ in ref_spk]
    for d, R, H, scored in intervals:
        for r in R:
            for h in H:
                overlap[ri[r]][hi[h]] += d * scale + (d if scored else 0)
    # Maximizing overlap == minimizing sum(2*(top - ov)) + top per unmatched speaker.
    top = max((x for row in overlap for x in row), default=Fraction(0))
    assignment = solve_assignment(
        [[2 * (top - x) for x in row] for row in overlap],
        [top] * len(ref_spk),
        [top] * len(hyp_spk),
    )
    mapping = {ref_spk[i]: hyp_spk[j] for i, j in assignment.mapping.items()}

    missed = false_alarm = confusion = Fraction(0)
    for d, R, H, scored in intervals:
        if not scored:
            continue
        correct = sum(1 for r in R if mapping.get(r) in H)
        missed += d * max(0, len(R) - len(H))
        false_alarm += d * max(0, len(H) - len(R))
        confusion += d * (min(len(R), len(H)) - correct)
    return DerBreakdown(missed, false_alarm, confusion, ref_speech, mapping)


# --------------------------------------------------------------------------
# Corpus evaluation

@dataclass(frozen=True)
class EvalConfig:
    collar_tcp: float = DEFAULT_COLLAR_TCP
    collar_der: float = DEFAULT_COLLAR_DER
    normalize: bool = False
    timing_strategy: Optional[str] = 'equidistant'
    jobs: int = 1

    def header(self) -> dict:
        return {
            'collar_tcp': self.collar_tcp,
            'collar_der': self.collar_der,
            'normalize': self.normalize,
            'timing_strategy': self.timing_strategy,
        }


@dataclass(frozen=True)
class RecordingScores:
    recording_id: str
    der: Optional[DerBreakdown]
    cpwer: PermutedWer
    tcpwer: PermutedWer
    wer: WerBreakdown


@dataclass(frozen=True)
class CorpusAverage:
    der_error: Fraction
    der_ref_speech: Fraction
    cpwer: EditSummary
    tcpwer: EditSummary
    wer: EditSummary

    @property
    def der(self):
        if self.der_ref_speech == 0:
            return None
        return self.der_error / self.der_ref_speech


@dataclass(frozen=True)
class MetricReport:
    rows: tuple
    average: CorpusAverage
    config: EvalConfig
    missing: tuple = ()
    failures: tuple = ()


def evaluate_recording(ref: Transcript, hyp: Transcript, config: EvalConfig = EvalConfig()) -> RecordingScores:
    try:
        der_result = der(ref, hyp, config.collar_der)
    except EmptyReference:
        der_result = None
    return RecordingScores(
        ref.recording_id,
        der_result,
        cpwer(ref, hyp, config.normalize),
        tcpwer(ref, hyp, config.collar_tcp, config.normalize, config.timing_strategy),
        wer(ref, hyp, config.normalize),
    )


def _evaluate_pair(args):
    ref, hyp, config = args
    return evaluate_recording(ref, hyp, config)


def pair_transcripts(refs, hyps):
    """Match transcripts by recording id.

    Returns ``(pairs, missing)`` where ``missing`` lists one
    :class:`MissingPair` per unmatched id, in id order.
    """
    ref_by_id = {t.recording_id: t for t in refs}
    hyp_by_id = {t.recording_id: t for t in hyps}
    pairs, missing = [], []
    for rid in sorted(set(ref_by_id) | set(hyp_by_id)):
        if rid not in hyp_by_id:
            missing.append(MissingPair(f'{rid}: no hypothesis'))
        elif rid not in ref_by_id:
            missing.append(MissingPair(f'{rid}: no reference'))
        else:
            pairs.append((ref_by_id[rid], hyp_by_id[rid]))
    return pairs, missing


def evaluate_corpus(pairs, config: EvalConfig = EvalConfig(), missing=()) -> MetricReport:
    """Score every (ref, hyp) pair and micro-average over the corpus.

    A pair whose ref or hyp is ``None`` is reported as missing instead of
    aborting the run. Rows are ordered by recording id whatever the
    completion order of the worker pool.
    """
    missing = list(missing)
    complete = []
    for ref, hyp in pairs:
        if ref is None or hyp is None:
            rid = (ref or hyp).recording_id
            side = 'hypothesis' if hyp is None else 'reference'
            missing.append(MissingPair(f'{rid}: no {side}'))
        else:
            complete.append((ref, hyp))
    ids = [r.recording_id for r, _ in complete]
    if len(set(ids)) != len(ids):
        raise ValueError('recording ids must be unique')

    work = [(r, h, config) for r, h in complete]
    if config.jobs > 1 and len(work) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_evaluate_pair, work))
    else:
        rows = [_evaluate_pair(w) for w in work]
    rows.sort(key=lambda r: r.recording_id)

    defined = [r.der for r in rows if r.der is not None]
    average = CorpusAverage(
        der_error=sum((d.error for d in defined), Fraction(0)),
        der_ref_speech=sum((d.ref_speech for d in defined), Fraction(0)),
        cpwer=sum((r.cpwer.breakdown.summary for r in rows), EditSummary()),
        tcpwer=sum((r.tcpwer.breakdown.summary for r in rows), EditSummary()),
        wer=sum((r.wer.summary for r in rows), EditSummary()),
    )
    missing.sort(key=str)
    for m in missing:
        logger.warning('missing pair: %s', m)
    return MetricReport(tuple(rows), average, config, tuple(str(m) for m in missing))
