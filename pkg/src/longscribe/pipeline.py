"""
Deterministic corpus-preparation steps: boundary refinement, quality
filtering, chunking, token budgets, curriculum lengths and source mixing.
"""
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from longscribe.align import levenshtein_align
from longscribe.errors import BadStage, EmptyCorpus, MissingTimings, SchemaError
from longscribe.metrics import normalize_word
from longscribe.transcript import Segment, Transcript, Word, seglst_from_dict

__all__ = [
    'QualityReport',
    'MixWeights',
    'DEFAULT_MIX',
    'refine_boundaries',
    'quality_filter',
    'quality_filter_transcripts',
    'load_pairs',
    'chunk_intervals',
    'shift_transcript',
    'token_budget',
    'curriculum_lengths',
    'CURRICULUM',
    'mix_sample',
]

BAD_SEGMENT_WER = Fraction(1, 5)
MAX_BAD_FRACTION = Fraction(3, 10)
MIN_SPEECH_FRACTION = Fraction(3, 5)
TOKENS_PER_SECOND = 7.5
# 8192 and 65536 are the published endpoints; the middle stages are a doubling schedule.
CURRICULUM = (8192, 16384, 32768, 65536)


# --------------------------------------------------------------------------
# Boundary refinement

def _split_points(words, start, end, max_len):
    """Indices k such that the piece is cut after ``words[k]``; word ends near
    the equally spaced targets that bring every piece under ``max_len``."""
    length = end - start
    if length <= max_len or len(words) < 2:
        return []
    parts = math.ceil(length / max_len)
    candidates = list(range(len(words) - 1))
    cuts = []
    for m in range(1, parts):
        target = start + length * m / parts
        k = min(candidates, key=lambda k: (abs(words[k].end - target), k))
        if k not in cuts:
            cuts.append(k)
    return sorted(cuts)


def _cut(segment, words, start, end, cuts):
    pieces = []
    lo, first = start, 0
    for k in cuts:
        hi = words[k].end
        pieces.append((lo, hi, words[first:k + 1]))
        lo, first = hi, k + 1
    pieces.append((lo, end, words[first:]))
    return pieces


def refine_boundaries(t: Transcript, punctuation: str = '.?!', max_len: float = 30.0) -> Transcript:
    """Split segments after sentence-final punctuation and cap their length.

    Each segment is cut after every word (but the last) whose text ends in
    one of ``punctuation``, at that word's end time. A piece still longer
    than ``max_len`` seconds is cut into ``ceil(length / max_len)`` parts at
    the word ends nearest the equally spaced targets (the midpoint for two
    parts), repeatedly until no piece can be shortened further.
    """
    out = []
    for s in t.segments:
        if not s.words:
            out.append(s)
            continue
        if not s.has_word_timings:
            raise MissingTimings(f'segment [{s.start}, {s.end}] of {s.speaker_id} has no word timings')
        words = list(s.words)
        cuts = [k for k, w in enumerate(words[:-1]) if w.text[-1] in punctuation]
        queue = _cut(s, words, s.start, s.end, cuts)
        while queue:
            lo, hi, piece = queue.pop(0)
            cuts = _split_points(piece, lo, hi, max_len)
            if cuts:
                queue[:0] = _cut(s, piece, lo, hi, cuts)
            else:
                out.append(Segment(s.speaker_id, lo, hi, tuple(piece)))
    return Transcript(t.recording_id, tuple(out), t.duration)


# --------------------------------------------------------------------------
# Quality filter

@dataclass(frozen=True)
class QualityReport:
    recording_id: str
    segment_wers: tuple
    bad_fraction: Fraction
    speech_fraction: Fraction
    keep: bool

    def __post_init__(self):
        assert self.keep == (self.bad_fraction <= MAX_BAD_FRACTION
                             and self.speech_fraction >= MIN_SPEECH_FRACTION)

    def to_dict(self) -> dict:
        return {
            'recording_id': self.recording_id,
            'keep': self.keep,
            'bad_fraction': float(self.bad_fraction),
            'speech_fraction': float(self.speech_fraction),
            'segment_wers': [None if w == math.inf else float(w) for w in self.segment_wers],
            'thresholds': {
                'bad_segment_wer': float(BAD_SEGMENT_WER),
                'max_bad_fraction': float(MAX_BAD_FRACTION),
                'min_speech_fraction': float(MIN_SPEECH_FRACTION),
            },
        }


def _decimal(x):
    # Exact value of the shortest decimal spelling, so 0.6 compares as 3/5.
    return Fraction(repr(float(x))) if isinstance(x, float) else Fraction(x)


def quality_filter(segments, speech_seconds, total_seconds, normalize: bool = True,
                   recording_id: str = '') -> QualityReport:
    """Keep/discard decision for one recording.

    ``segments`` holds ``(ref_words, hyp_words)`` per segment. A segment is
    bad when its WER exceeds 20 %; the recording is discarded when more
    than 30 % of segments are bad or speech covers less than 60 % of the
    recording. Both limits themselves keep the recording.
    """
    segments = list(segments)
    if not segments:
        raise EmptyCorpus('quality filter needs at least one segment')
    if not total_seconds > 0:
        raise ValueError(f'total_seconds must be > 0, got {total_seconds}')
    wers = []
    bad = 0
    for ref, hyp in segments:
        if normalize:
            ref = [w for w in map(normalize_word, ref) if w]
            hyp = [w for w in map(normalize_word, hyp) if w]
        summary = levenshtein_align(list(ref), list(hyp))
        if summary.ref_len:
            rate = Fraction(summary.errors, summary.ref_len)
        else:
            rate = Fraction(0) if summary.errors == 0 else math.inf
        wers.append(rate)
        bad += rate > BAD_SEGMENT_WER
    bad_fraction = Fraction(bad, len(segments))
    speech_fraction = _decimal(speech_seconds) / _decimal(total_seconds)
    keep = not (bad_fraction > MAX_BAD_FRACTION or speech_fraction < MIN_SPEECH_FRACTION)
    return QualityReport(recording_id, tuple(wers), bad_fraction, speech_fraction, keep)


def _speech_seconds(t: Transcript) -> float:
    """Length of the union of the speech segments."""
    total, reach = 0.0, None
    for s in sorted((s for s in t.segments if s.is_speech), key=lambda s: s.start):
        if reach is None or s.start > reach:
            total += s.end - s.start
            reach = s.end
        elif s.end > reach:
            total += s.end - reach
            reach = s.end
    return total


def quality_filter_transcripts(ref: Transcript, hyp: Transcript, total_seconds=None,
                               normalize: bool = True) -> QualityReport:
    """Quality filter on a side-by-side pair: segment k of ``ref`` against segment k of ``hyp``."""
    ref_segs = [s for s in ref.segments if s.is_speech]
    hyp_segs = [s for s in hyp.segments if s.is_speech]
    if len(ref_segs) != len(hyp_segs):
        raise SchemaError(f'ref has {len(ref_segs)} speech segments, hyp has {len(hyp_segs)}')
    if total_seconds is None:
        total_seconds = ref.duration
    if total_seconds is None:
        raise SchemaError('total duration unknown: set "duration" on the reference')
    return quality_filter(
        [(r.texts, h.texts) for r, h in zip(ref_segs, hyp_segs)],
        _speech_seconds(ref), total_seconds, normalize, ref.recording_id,
    )


def load_pairs(text: str):
    """Parse a pairs document ``{"ref": <SegLST>, "hyp": <SegLST>, "total_seconds": n?}``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f'invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}') from None
    if not isinstance(doc, dict) or 'ref' not in doc or 'hyp' not in doc:
        raise SchemaError('pairs document needs "ref" and "hyp"')
    total = doc.get('total_seconds')
    if total is not None and (isinstance(total, bool) or not isinstance(total, (int, float))):
        raise SchemaError('"total_seconds" must be a number')
    return seglst_from_dict(doc['ref']), seglst_from_dict(doc['hyp']), total


# --------------------------------------------------------------------------
# Chunking and budgets

def chunk_intervals(duration: float, chunk: float = 240.0):
    """Consecutive ``[i*chunk, min((i+1)*chunk, duration)]`` intervals covering ``[0, duration]``."""
    if duration < 0 or not chunk > 0:
        raise ValueError(f'need duration >= 0 and chunk > 0, got {duration}, {chunk}')
    out = []
    i = 0
    while i * chunk < duration:
        out.append((i * chunk, min((i + 1) * chunk, duration)))
        i += 1
    return out


def shift_transcript(t: Transcript, offset: float, duration=None) -> Transcript:
    """Move a chunk-local transcript to global time by adding the chunk offset."""
    segments = []
    for s in t.segments:
        words = tuple(Word(w.text, w.start + offset, w.end + offset) if w.timed else w for w in s.words)
        segments.append(Segment(s.speaker_id, s.start + offset, s.end + offset, words, s.tag))
    return Transcript(t.recording_id, tuple(segments), duration)


def token_budget(duration: float, rate: float = TOKENS_PER_SECOND) -> int:
    """Number of audio tokens for ``duration`` seconds: ``ceil(duration * rate)``.

    Arithmetic is done on the decimal values so ``0.4 s * 7.5`` gives 3, not 4.
    """
    if duration < 0:
        raise ValueError(f'duration must be >= 0, got {duration}')
    return math.ceil(_decimal(duration) * _decimal(rate))


def curriculum_lengths(stage: int) -> int:
    """Context length in tokens for curriculum stage 0..3."""
    if isinstance(stage, bool) or not isinstance(stage, int) or not 0 <= stage < len(CURRICULUM):
        raise BadStage(f'stage must be 0..{len(CURRICULUM) - 1}, got {stage!r}')
    return CURRICULUM[stage]


# --------------------------------------------------------------------------
# Source mixing

@dataclass(frozen=True)
class MixWeights:
    benchmarks: float = 0.5
    music: float = 0.1
    synthetic: float = 0.1
    longform: float = 0.3

    def __post_init__(self):
        w = self.as_tuple()
        if any(not math.isfinite(x) or x < 0 for x in w):
            raise ValueError(f'weights must be finite and >= 0: {w}')
        if abs(math.fsum(w) - 1.0) > 1e-9:
            raise ValueError(f'weights must sum to 1: {w}')

    def as_tuple(self):
        return (self.benchmarks, self.music, self.synthetic, self.longform)


DEFAULT_MIX = MixWeights()


def mix_sample(w: MixWeights, seed: int, n: int) -> list:
    """Draw ``n`` source indices (0=benchmarks, 1=music, 2=synthetic, 3=longform).

    Generator contract: numpy ``Generator(PCG64(seed))``; one
    ``random(n)`` call gives uniforms u in [0, 1); each index is the first k
    with ``u < cumsum(weights)[k]``, the last cumulative weight pinned to 1.
    """
    if n < 0:
        raise ValueError(f'n must be >= 0, got {n}')
    rng = np.random.Generator(np.random.PCG64(seed))
    cumulative = np.cumsum(np.asarray(w.as_tuple(), dtype=np.float64))
    cumulative[-1] = 1.0
    u = rng.random(n)
    return np.searchsorted(cumulative, u, side='right').tolist()
