"""Rendering of :class:`~longscribe.metrics.MetricReport` as a table or a JSON document."""
import json
import math

from longscribe import __version__
from longscribe.metrics import MetricReport, _rate

COLUMNS = ('DER', 'cpWER', 'tcpWER', 'WER')
AVERAGE_ROW = 'AVERAGE'


def percent(rate) -> str:
    """Rate as a percentage with two decimals; ``undefined`` for missing or infinite rates."""
    if rate is None or rate == math.inf:
        return 'undefined'
    return f'{float(rate * 100):.2f}'


def _number(rate):
    if rate is None or rate == math.inf:
        return None
    return float(rate)


def header(report: MetricReport) -> dict:
    return {'toolkit': 'longscribe', 'version': __version__, **report.config.header()}


def _summary_doc(summary, rate):
    return {
        'rate': _number(rate),
        'percent': percent(rate),
        'errors': summary.errors,
        'ref_len': summary.ref_len,
        'substitutions': summary.substitutions,
        'insertions': summary.insertions,
        'deletions': summary.deletions,
    }


def _der_doc(d):
    if d is None:
        return {'rate': None, 'percent': percent(None)}
    return {
        'rate': float(d.rate),
        'percent': percent(d.rate),
        'missed': float(d.missed),
        'false_alarm': float(d.false_alarm),
        'confusion': float(d.confusion),
        'ref_speech': float(d.ref_speech),
    }


def _rates(row):
    return (
        row.der.rate if row.der is not None else None,
        row.cpwer.rate,
        row.tcpwer.rate,
        row.wer.rate,
    )


def _average_rates(avg):
    return (
        avg.der,
        _rate(avg.cpwer.errors, avg.cpwer.ref_len),
        _rate(avg.tcpwer.errors, avg.tcpwer.ref_len),
        _rate(avg.wer.errors, avg.wer.ref_len),
    )


def to_document(report: MetricReport) -> dict:
    rows = []
    for row in report.rows:
        rows.append({
            'recording_id': row.recording_id,
            'DER': _der_doc(row.der),
            'cpWER': _summary_doc(row.cpwer.breakdown.summary, row.cpwer.rate),
            'tcpWER': _summary_doc(row.tcpwer.breakdown.summary, row.tcpwer.rate),
            'WER': _summary_doc(row.wer.summary, row.wer.rate),
        })
    avg = report.average
    der_rate, cp_rate, tcp_rate, wer_rate = _average_rates(avg)
    average = {
        'recording_id': AVERAGE_ROW,
        'DER': {
            'rate': _number(der_rate),
            'percent': percent(der_rate),
            'error': float(avg.der_error),
            'ref_speech': float(avg.der_ref_speech),
        },
        'cpWER': _summary_doc(avg.cpwer, cp_rate),
        'tcpWER': _summary_doc(avg.tcpwer, tcp_rate),
        'WER': _summary_doc(avg.wer, wer_rate),
    }
    return {
        'header': header(report),
        'columns': list(COLUMNS),
        'rows': rows,
        'average': average,
        'missing': list(report.missing),
        'failures': list(report.failures),
    }


def render_document(report: MetricReport) -> str:
    return json.dumps(to_document(report), indent=2, sort_keys=False) + '\n'


def render_table(report: MetricReport) -> str:
    """Fixed-width table with one row per recording plus the micro-averaged AVERAGE row."""
    head = header(report)
    lines = ['# ' + ' '.join(f'{k}={_flag(v)}' for k, v in head.items())]
    body = [(row.recording_id, *(percent(r) for r in _rates(row))) for row in report.rows]
    body.append((AVERAGE_ROW, *(percent(r) for r in _average_rates(report.average))))
    width = max(len('recording_id'), *(len(b[0]) for b in body))
    cols = [max(len(c), *(len(b[k + 1]) for b in body)) for k, c in enumerate(COLUMNS)]
    fmt = lambda cells: '  '.join([cells[0].ljust(width)] + [c.rjust(w) for c, w in zip(cells[1:], cols)])
    lines.append(fmt(('recording_id',) + COLUMNS))
    lines.append('-' * len(lines[-1]))
    for k, cells in enumerate(body):
        if k == len(body) - 1:
            lines.append('-' * len(lines[1]))
        lines.append(fmt(cells))
    for m in report.missing:
        lines.append(f'# missing: {m}')
    for f in report.failures:
        lines.append(f'# failure: {f}')
    return '\n'.join(lines) + '\n'


def _flag(value):
    if isinstance(value, bool):
        return str(value).lower()
    if value is None:
        return 'none'
    return str(value)
