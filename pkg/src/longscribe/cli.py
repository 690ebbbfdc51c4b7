"""Command-line entry point: ``longscribe <command> ...``.

Exit codes: 0 success, 1 malformed input (parse failure), 2 missing
recording pair in ``eval``.
"""
import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from longscribe import __version__
from longscribe.diarize import (
    DEFAULT_MERGE_THRESHOLD,
    DEFAULT_MIN_CLUSTER_SIZE,
    DEFAULT_MIN_SAMPLES,
    frames_to_turns,
    hdbscan,
    load_embeddings,
    merge_clusters,
)
from longscribe.errors import LongscribeError
from longscribe.metrics import (
    DEFAULT_COLLAR_DER,
    DEFAULT_COLLAR_TCP,
    EvalConfig,
    evaluate_corpus,
    pair_transcripts,
)
from longscribe.pipeline import (
    MixWeights,
    chunk_intervals,
    load_pairs,
    mix_sample,
    quality_filter_transcripts,
    token_budget,
)
from longscribe.report import render_document, render_table
from longscribe.transcript import (
    Transcript,
    parse_rich_stream,
    parse_seglst,
    render_rich_stream,
    seglst_to_dict,
    serialize_seglst,
)

logger = logging.getLogger('longscribe')

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_MISSING = 2

TIMING_STRATEGIES = ('equidistant', 'char')


class InputFailure(Exception):
    """Malformed input file; carries the path for diagnostics."""

    def __init__(self, path, error):
        self.path = path
        self.error = error
        super().__init__(f'{path}: {error}')


def _read(path):
    try:
        return Path(path).read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as e:
        raise InputFailure(path, e) from None


def _write(path, text):
    if path is None or str(path) == '-':
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding='utf-8')


def _number(x):
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _default_jobs():
    env = os.environ.get('LONGSCRIBE_JOBS')
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning('ignoring LONGSCRIBE_JOBS=%r', env)
    return os.cpu_count() or 1


def _run_header(command, **config):
    return {'toolkit': 'longscribe', 'version': __version__, 'command': command, **config}


# --------------------------------------------------------------------------
# eval

def _load_dir(directory):
    """Parse every ``*.json`` SegLST file in ``directory``; returns (transcripts, failures)."""
    transcripts, failures = [], []
    paths = sorted(Path(directory).glob('*.json'))
    for path in paths:
        try:
            transcripts.append(parse_seglst(_read(path)))
        except (LongscribeError, InputFailure) as e:
            error = e.error if isinstance(e, InputFailure) else e
            failures.append(f'{path}: {error}')
    return transcripts, failures


def cmd_eval(args):
    for d in (args.ref_dir, args.hyp_dir):
        if not Path(d).is_dir():
            raise InputFailure(d, 'not a directory')
    refs, ref_failures = _load_dir(args.ref_dir)
    hyps, hyp_failures = _load_dir(args.hyp_dir)
    failures = ref_failures + hyp_failures
    for f in failures:
        logger.error('%s', f)

    config = EvalConfig(
        collar_tcp=args.collar_tcp,
        collar_der=args.collar_der,
        normalize=args.normalize,
        timing_strategy=args.timing_strategy,
        jobs=args.jobs,
    )
    pairs, missing = pair_transcripts(refs, hyps)
    report = evaluate_corpus(pairs, config, missing)
    report = dataclasses.replace(report, failures=tuple(failures))

    outputs = []
    if args.format in ('table', 'both'):
        outputs.append(('report.txt', render_table(report)))
    if args.format in ('doc', 'both'):
        outputs.append(('report.json', render_document(report)))
    if args.out is None:
        for _, text in outputs:
            sys.stdout.write(text)
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in outputs:
            _write(out / name, text)
        if failures:
            _write(out / 'failures.txt', ''.join(f + '\n' for f in failures))

    if failures:
        return EXIT_INPUT
    if report.missing:
        return EXIT_MISSING
    return EXIT_OK


# --------------------------------------------------------------------------
# diarize

def cmd_diarize(args):
    recording_id, frames = _parse(args.embeddings, load_embeddings)
    clusters = hdbscan(frames, args.min_cluster_size, args.min_samples, args.metric)
    merged = merge_clusters(clusters, args.merge_threshold)
    turns = frames_to_turns(frames, merged.labels)
    print(f'speakers={merged.k} noise_fraction={merged.noise_fraction:.4f}', file=sys.stderr)

    doc = seglst_to_dict(Transcript(recording_id, tuple(turns)))
    doc['meta'] = _run_header(
        'diarize',
        min_cluster_size=args.min_cluster_size,
        min_samples=args.min_samples,
        merge_threshold=args.merge_threshold,
        metric=args.metric,
    )
    _write(args.out, json.dumps(doc, indent=2) + '\n')
    return EXIT_OK


# --------------------------------------------------------------------------
# convert

def _parse(path, parser):
    try:
        return parser(_read(path))
    except LongscribeError as e:
        raise InputFailure(path, e) from None


def cmd_convert(args):
    if args.source == 'seglst':
        t = _parse(args.input, parse_seglst)
    else:
        rid = args.recording_id if args.recording_id is not None else Path(args.input).stem
        t = _parse(args.input, lambda text: parse_rich_stream(text, rid))

    if args.target == 'seglst':
        text = serialize_seglst(t)
    else:
        timed = sum(1 for s in t.segments if s.words and s.has_word_timings)
        if timed:
            logger.warning('rich stream drops word timings (%d segments affected)', timed)
        text = render_rich_stream(t, args.time_format)
    _write(args.out, text)
    return EXIT_OK


# --------------------------------------------------------------------------
# filter, budget, chunk, mix

def cmd_filter(args):
    ref, hyp, total = _parse(args.pairs, load_pairs)
    try:
        report = quality_filter_transcripts(ref, hyp, total, args.normalize)
    except LongscribeError as e:
        raise InputFailure(args.pairs, e) from None
    doc = {'header': _run_header('filter', normalize=args.normalize), **report.to_dict()}
    _write(args.out, json.dumps(doc, indent=2) + '\n')
    return EXIT_OK


def cmd_budget(args):
    print(token_budget(args.duration, args.rate))
    return EXIT_OK


def cmd_chunk(args):
    for lo, hi in chunk_intervals(args.duration, args.size):
        print(f'{_number(lo)}\t{_number(hi)}')
    return EXIT_OK


def cmd_mix(args):
    w = MixWeights(*args.weights)
    _write(args.out, ''.join(f'{i}\n' for i in mix_sample(w, args.seed, args.n)))
    return EXIT_OK


# --------------------------------------------------------------------------

def _non_negative(text):
    x = float(text)
    if not x >= 0:
        raise argparse.ArgumentTypeError(f'must be >= 0: {text}')
    return x


def _positive_int(text):
    x = int(text)
    if x < 1:
        raise argparse.ArgumentTypeError(f'must be >= 1: {text}')
    return x


def build_parser():
    p = argparse.ArgumentParser(prog='longscribe', description=__doc__.splitlines()[0])
    p.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = p.add_subparsers(dest='command', required=True)

    e = sub.add_parser('eval', help='score hypothesis SegLST files against references')
    e.add_argument('ref_dir')
    e.add_argument('hyp_dir')
    e.add_argument('--collar-tcp', type=_non_negative, default=DEFAULT_COLLAR_TCP)
    e.add_argument('--collar-der', type=_non_negative, default=DEFAULT_COLLAR_DER)
    e.add_argument('--normalize', action=argparse.BooleanOptionalAction, default=False)
    e.add_argument('--timing-strategy', choices=TIMING_STRATEGIES, default='equidistant')
    e.add_argument('--jobs', type=_positive_int, default=None,
                   help='worker processes (default: $LONGSCRIBE_JOBS or CPU count)')
    e.add_argument('--format', choices=('table', 'doc', 'both'), default='both')
    e.add_argument('--out', help='output directory (default: stdout)')
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser('diarize', help='cluster speaker embeddings into turns')
    d.add_argument('embeddings')
    d.add_argument('--min-cluster-size', type=_positive_int, default=DEFAULT_MIN_CLUSTER_SIZE)
    d.add_argument('--min-samples', type=_positive_int, default=DEFAULT_MIN_SAMPLES)
    d.add_argument('--merge-threshold', type=float, default=DEFAULT_MERGE_THRESHOLD)
    d.add_argument('--metric', choices=('cosine', 'euclidean'), default='cosine')
    d.add_argument('--out')
    d.set_defaults(func=cmd_diarize)

    c = sub.add_parser('convert', help='convert between SegLST and the rich stream')
    c.add_argument('input')
    c.add_argument('--from', dest='source', choices=('seglst', 'rich'), required=True)
    c.add_argument('--to', dest='target', choices=('seglst', 'rich'), required=True)
    c.add_argument('--recording-id', help='recording id for rich input (default: file stem)')
    c.add_argument('--time-format', choices=('auto', 'hours'), default='auto')
    c.add_argument('--out')
    c.set_defaults(func=cmd_convert)

    f = sub.add_parser('filter', help='quality filter on a ref/hyp pairs document')
    f.add_argument('pairs')
    f.add_argument('--normalize', action=argparse.BooleanOptionalAction, default=True)
    f.add_argument('--out')
    f.set_defaults(func=cmd_filter)

    b = sub.add_parser('budget', help='audio token count for a duration')
    b.add_argument('duration', type=_non_negative)
    b.add_argument('--rate', type=_non_negative, default=7.5)
    b.set_defaults(func=cmd_budget)

    k = sub.add_parser('chunk', help='fixed-size chunk intervals for a duration')
    k.add_argument('duration', type=_non_negative)
    k.add_argument('size', type=float, nargs='?', default=240.0)
    k.set_defaults(func=cmd_chunk)

    m = sub.add_parser('mix', help='sample training-source indices')
    m.add_argument('n', type=int)
    m.add_argument('--seed', type=int, default=0)
    m.add_argument('--weights', type=float, nargs=4, default=MixWeights().as_tuple(),
                   metavar=('BENCH', 'MUSIC', 'SYNTH', 'LONG'))
    m.add_argument('--out')
    m.set_defaults(func=cmd_mix)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format='%(levelname)s: %(message)s', stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, 'jobs', 0) is None:
        args.jobs = _default_jobs()
    try:
        return args.func(args)
    except InputFailure as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_INPUT
    except (LongscribeError, ValueError) as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_INPUT


if __name__ == '__main__':
    sys.exit(main())
