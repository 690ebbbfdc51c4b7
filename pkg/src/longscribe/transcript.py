"""
Rich transcription data model.

A :class:`Transcript` is an ordered collection of speaker-attributed,
time-stamped :class:`Segment` objects for one recording. Two text formats
are supported:

* SegLST, a JSON document with one record per speaker turn, and
* the rich stream, one human-readable line per segment::

    [Speaker 1] [00:00.00 - 00:05.32] hello there
    [Speaker 2] [01:00:00.00 - 01:00:01.50] [Music]
"""
import enum
import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional

from longscribe.errors import (
    EmptySegment,
    GrammarError,
    InvariantError,
    SchemaError,
)

__all__ = [
    'AcousticTag',
    'Word',
    'Segment',
    'Transcript',
    'parse_seglst',
    'serialize_seglst',
    'seglst_to_dict',
    'seglst_from_dict',
    'render_rich_stream',
    'parse_rich_stream',
    'estimate_word_timings',
    'quantize_transcript',
    'TIMING_STRATEGIES',
    'TIME_FORMATS',
]


class AcousticTag(enum.Enum):
    """Closed set of non-speech event labels. The value is the serialized form."""
    UnintelligibleSpeech = '[Unintelligible Speech]'
    Music = '[Music]'
    HumanSounds = '[Human Sounds]'
    EnvironmentalSounds = '[Environmental Sounds]'
    Noise = '[Noise]'
    Silence = '[Silence]'

    @classmethod
    def parse(cls, text: str) -> 'AcousticTag':
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f'unknown acoustic tag {text!r}') from None

    def __str__(self):
        return self.value


def _check_time(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvariantError(f'{what} must be a number, got {value!r}')
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise InvariantError(f'{what} must be finite and >= 0, got {value!r}')
    return value


@dataclass(frozen=True)
class Word:
    text: str
    start: Optional[float] = None
    end: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text:
            raise InvariantError(f'word text must be a non-empty string, got {self.text!r}')
        if any(c.isspace() for c in self.text) or '[' in self.text or ']' in self.text:
            # Brackets are reserved for tags in the rich stream.
            raise InvariantError(f'word text must not contain whitespace or brackets: {self.text!r}')
        if (self.start is None) != (self.end is None):
            raise InvariantError(f'word {self.text!r} has only one of start/end')
        if self.start is not None:
            object.__setattr__(self, 'start', _check_time(self.start, 'word start'))
            object.__setattr__(self, 'end', _check_time(self.end, 'word end'))
            if self.start > self.end:
                raise InvariantError(f'word {self.text!r}: start {self.start} > end {self.end}')

    @property
    def timed(self) -> bool:
        return self.start is not None


@dataclass(frozen=True)
class Segment:
    """One speaker turn.

    A segment carries either words or an acoustic tag, never both. A
    segment with neither is allowed (e.g. diarization turns without text).
    Per-word timings are all-or-nothing within a segment.
    """
    speaker_id: str
    start: float
    end: float
    words: tuple = ()
    tag: Optional[AcousticTag] = None

    def __post_init__(self):
        if not isinstance(self.speaker_id, str) or not self.speaker_id:
            raise InvariantError(f'speaker_id must be a non-empty string, got {self.speaker_id!r}')
        if any(c in self.speaker_id for c in '[]\n\r'):
            raise InvariantError(f'speaker_id must not contain brackets or newlines: {self.speaker_id!r}')
        start = _check_time(self.start, 'segment start')
        end = _check_time(self.end, 'segment end')
        if start > end:
            raise InvariantError(f'segment end {end} < start {start}')
        object.__setattr__(self, 'start', start)
        object.__setattr__(self, 'end', end)

        words = tuple(w if isinstance(w, Word) else Word(w) for w in self.words)
        object.__setattr__(self, 'words', words)
        if self.tag is not None and not isinstance(self.tag, AcousticTag):
            object.__setattr__(self, 'tag', AcousticTag.parse(self.tag))
        if self.tag is not None and words:
            raise InvariantError('segment has both words and an acoustic tag')

        timed = [w.timed for w in words]
        if any(timed) and not all(timed):
            raise InvariantError('word timings must be given for all words of a segment or none')
        if words and timed[0]:
            previous = start
            for w in words:
                if w.start < start or w.end > end:
                    raise InvariantError(
                        f'word {w.text!r} [{w.start}, {w.end}] outside segment [{start}, {end}]')
                if w.start < previous:
                    raise InvariantError(f'word starts decrease at {w.text!r}')
                previous = w.start

    @property
    def texts(self) -> tuple:
        return tuple(w.text for w in self.words)

    @property
    def has_word_timings(self) -> bool:
        return bool(self.words) and self.words[0].timed

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def is_speech(self) -> bool:
        """True unless the segment is an acoustic-tag (non-speech) event."""
        return self.tag is None

    def sort_key(self):
        return (self.start, self.end, self.speaker_id, self.texts,
                self.tag.value if self.tag else '')


@dataclass(frozen=True)
class Transcript:
    """All segments of one recording, kept in canonical (start, end, speaker) order."""
    recording_id: str
    segments: tuple = ()
    duration: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.recording_id, str):
            raise InvariantError(f'recording_id must be a string, got {self.recording_id!r}')
        segments = tuple(sorted(self.segments, key=Segment.sort_key))
        object.__setattr__(self, 'segments', segments)
        if self.duration is not None:
            duration = _check_time(self.duration, 'duration')
            object.__setattr__(self, 'duration', duration)
            for s in segments:
                if s.end > duration:
                    raise InvariantError(f'segment end {s.end} exceeds duration {duration}')

    def __len__(self):
        return len(self.segments)

    @property
    def speakers(self) -> list:
        return sorted({s.speaker_id for s in self.segments})

    def words(self) -> list:
        """All words of speech segments in canonical order."""
        return [w for s in self.segments for w in s.words]

    def replace(self, **kwargs) -> 'Transcript':
        return replace(self, **kwargs)


# --------------------------------------------------------------------------
# SegLST

def seglst_from_dict(document) -> Transcript:
    if not isinstance(document, dict):
        raise SchemaError('document must be a JSON object')
    if 'segments' not in document:
        raise SchemaError('missing field "segments"')
    recording_id = document.get('recording_id', '')
    if not isinstance(recording_id, str):
        raise SchemaError('"recording_id" must be a string')
    duration = document.get('duration')
    if duration is not None and (isinstance(duration, bool) or not isinstance(duration, (int, float))):
        raise SchemaError('"duration" must be a number or null')
    records = document['segments']
    if not isinstance(records, list):
        raise SchemaError('"segments" must be a list')

    segments = []
    for index, record in enumerate(records):
        segments.append(_segment_from_record(record, index))
    try:
        return Transcript(recording_id, tuple(segments), duration)
    except InvariantError as e:
        raise InvariantError(f'transcript: {e}') from None


def _number(record, key, index):
    if key not in record:
        raise SchemaError(f'missing field {key!r}', index)
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f'{key!r} must be a number, got {value!r}', index)
    return value


def _segment_from_record(record, index) -> Segment:
    if not isinstance(record, dict):
        raise SchemaError('segment record must be an object', index)
    speaker = record.get('speaker')
    if 'speaker' not in record:
        raise SchemaError("missing field 'speaker'", index)
    if not isinstance(speaker, str):
        raise SchemaError(f"'speaker' must be a string, got {speaker!r}", index)
    start = _number(record, 'start', index)
    end = _number(record, 'end', index)

    texts = record.get('words')
    if texts is None:
        texts = []
    if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
        raise SchemaError("'words' must be a list of strings or null", index)
    timings = record.get('word_timings')
    if timings is not None:
        if (not isinstance(timings, list)
                or not all(isinstance(p, list) and len(p) == 2 for p in timings)
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                           for p in timings for x in p)):
            raise SchemaError("'word_timings' must be a list of [start, end] pairs or null", index)
        if len(timings) != len(texts):
            raise SchemaError(
                f"'word_timings' has {len(timings)} entries for {len(texts)} words", index)
    tag = record.get('tag')
    if tag is not None and not isinstance(tag, str):
        raise SchemaError(f"'tag' must be a string or null, got {tag!r}", index)

    try:
        if timings is None:
            words = tuple(Word(t) for t in texts)
        else:
            words = tuple(Word(t, s, e) for t, (s, e) in zip(texts, timings))
        if tag is not None:
            tag = AcousticTag.parse(tag)
        return Segment(speaker, start, end, words, tag)
    except (InvariantError, ValueError) as e:
        raise InvariantError(str(e), index) from None


def parse_seglst(document: str) -> Transcript:
    """Parse a SegLST JSON document.

    Raises SchemaError for malformed records and InvariantError for
    records that are well-typed but inconsistent; both carry the record index.
    """
    try:
        data = json.loads(document)
    except json.JSONDecodeError as e:
        raise SchemaError(f'invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}') from None
    return seglst_from_dict(data)


def seglst_to_dict(t: Transcript) -> dict:
    records = []
    for s in t.segments:
        records.append({
            'speaker': s.speaker_id,
            'start': s.start,
            'end': s.end,
            'words': list(s.texts) if s.words else ([] if s.tag is None else None),
            'word_timings': [[w.start, w.end] for w in s.words] if s.has_word_timings else None,
            'tag': s.tag.value if s.tag is not None else None,
        })
    return {'recording_id': t.recording_id, 'duration': t.duration, 'segments': records}


def serialize_seglst(t: Transcript, indent=2) -> str:
    return json.dumps(seglst_to_dict(t), indent=indent, ensure_ascii=False) + '\n'


# --------------------------------------------------------------------------
# Rich stream

def _centiseconds(seconds: float) -> int:
    return int(round(seconds * 100))


TIME_FORMATS = ('auto', 'hours')


def format_timestamp(seconds: float, time_format: str = 'auto') -> str:
    """``mm:ss.cc`` below one hour, ``hh:mm:ss.cc`` from one hour on.

    ``time_format='hours'`` always writes the hour field.
    """
    if time_format not in TIME_FORMATS:
        raise ValueError(f'unknown time format {time_format!r}')
    cs = _centiseconds(seconds)
    hours, rest = divmod(cs, 360000)
    minutes, rest = divmod(rest, 6000)
    secs, frac = divmod(rest, 100)
    if hours or time_format == 'hours':
        return f'{hours:02d}:{minutes:02d}:{secs:02d}.{frac:02d}'
    return f'{minutes:02d}:{secs:02d}.{frac:02d}'


def quantize(seconds: float) -> float:
    return _centiseconds(seconds) / 100


def render_rich_stream(t: Transcript, time_format: str = 'auto') -> str:
    lines = []
    for s in t.segments:
        if s.tag is not None:
            content = s.tag.value
        else:
            content = ' '.join(s.texts)
        line = (f'[{s.speaker_id}] '
                f'[{format_timestamp(s.start, time_format)} - {format_timestamp(s.end, time_format)}]')
        if content:
            line += ' ' + content
        lines.append(line)
    return ''.join(line + '\n' for line in lines)


_TIME = r'(?:(\d{2,}):)?(\d{2}):(\d{2})\.(\d{2})'
_LINE_RE = re.compile(
    r'\[(?P<speaker>[^\[\]\n]+)\] '
    r'\[(?P<start>\d[\d:.]*) - (?P<end>\d[\d:.]*)\]'
    r'(?: (?P<content>.*))?$'
)
_TIME_RE = re.compile(_TIME + '$')


def _parse_timestamp(text, line, column):
    m = _TIME_RE.match(text)
    if m is None:
        raise GrammarError(f'malformed timestamp {text!r}', line, column)
    hours, minutes, secs, frac = m.groups()
    if int(minutes) >= 60 or int(secs) >= 60:
        raise GrammarError(f'timestamp field out of range in {text!r}', line, column)
    cs = ((int(hours or 0) * 60 + int(minutes)) * 60 + int(secs)) * 100 + int(frac)
    return cs / 100


def parse_rich_stream(text: str, recording_id: str = '', duration=None) -> Transcript:
    """Inverse of :func:`render_rich_stream` (times come back quantized to 0.01 s).

    Blank lines and lines starting with ``#`` are skipped.
    """
    segments = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.startswith('#'):
            continue
        m = _LINE_RE.match(raw)
        if m is None:
            raise GrammarError(
                'expected "[<speaker>] [<start> - <end>] <content>"', lineno, _mismatch_column(raw))
        start = _parse_timestamp(m['start'], lineno, m.start('start') + 1)
        end = _parse_timestamp(m['end'], lineno, m.start('end') + 1)
        if end < start:
            raise GrammarError(f'end {m["end"]} before start {m["start"]}', lineno, m.start('end') + 1)
        content = m['content'] or ''
        words, tag = (), None
        if content.startswith('[') and content.endswith(']'):
            try:
                tag = AcousticTag.parse(content)
            except ValueError:
                raise GrammarError(f'unknown acoustic tag {content}', lineno,
                                   m.start('content') + 1) from None
        elif content:
            try:
                words = tuple(Word(w) for w in content.split())
            except InvariantError as e:
                raise GrammarError(str(e), lineno, m.start('content') + 1) from None
        segments.append(Segment(m['speaker'], start, end, words, tag))
    try:
        return Transcript(recording_id, tuple(segments), duration)
    except InvariantError as e:
        raise GrammarError(str(e), 0, 0) from None


def _mismatch_column(line):
    """1-based column of the first character no prefix of the grammar explains."""
    partial = [
        r'\[[^\[\]\n]+\] \[\d[\d:.]* - \d[\d:.]*\]',
        r'\[[^\[\]\n]+\] \[\d[\d:.]* - ',
        r'\[[^\[\]\n]+\] \[',
        r'\[[^\[\]\n]+\]',
        r'\[',
    ]
    for pattern in partial:
        m = re.match(pattern, line)
        if m:
            return m.end() + 1
    return 1


def quantize_transcript(t: Transcript) -> Transcript:
    """What a rich-stream round trip preserves: times at 0.01 s, no word timings."""
    segments = tuple(
        Segment(s.speaker_id, quantize(s.start), quantize(s.end),
                tuple(Word(w.text) for w in s.words), s.tag)
        for s in t.segments
    )
    duration = None if t.duration is None else quantize(t.duration)
    return Transcript(t.recording_id, segments, duration)


# --------------------------------------------------------------------------
# Pseudo word timings

def _equidistant(start, end, texts):
    n = len(texts)
    span = end - start
    return [start + span * k / n for k in range(n + 1)]


def _char_proportional(start, end, texts):
    lengths = [len(t) for t in texts]
    total = sum(lengths)
    span = end - start
    bounds, acc = [start], 0
    for length in lengths:
        acc += length
        bounds.append(start + span * acc / total)
    return bounds


TIMING_STRATEGIES = {
    'equidistant': _equidistant,
    'char_proportional': _char_proportional,
    'char': _char_proportional,
}


def estimate_word_timings(s: Segment, strategy: str = 'equidistant') -> Segment:
    """Assign pseudo word timings inside the segment bounds.

    ``equidistant`` splits [start, end] into equal parts; ``char_proportional``
    makes each part proportional to the word's character count. The first
    word starts at the segment start and the last word ends at the segment
    end exactly. Segments that already carry word timings are returned as is.
    """
    if not s.words:
        raise EmptySegment(f'segment [{s.start}, {s.end}] of {s.speaker_id} has no words')
    if s.has_word_timings:
        return s
    try:
        boundaries = TIMING_STRATEGIES[strategy](s.start, s.end, s.texts)
    except KeyError:
        raise ValueError(f'unknown timing strategy {strategy!r}') from None
    boundaries[0], boundaries[-1] = s.start, s.end
    # Keep float rounding from leaving the segment or going backwards.
    for k in range(1, len(boundaries)):
        boundaries[k] = min(max(boundaries[k], boundaries[k - 1]), s.end)
    words = tuple(Word(w.text, boundaries[k], boundaries[k + 1]) for k, w in enumerate(s.words))
    return replace(s, words=words)
