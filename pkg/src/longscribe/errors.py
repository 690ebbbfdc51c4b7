"""Exception types shared across the toolkit."""


class LongscribeError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(LongscribeError, ValueError):
    """A SegLST (or embeddings / pairs) document does not match its schema."""

    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f'record {index}: {message}'
        super().__init__(message)


class InvariantError(LongscribeError, ValueError):
    """A value violates a domain invariant (e.g. end < start)."""

    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f'record {index}: {message}'
        super().__init__(message)


class GrammarError(LongscribeError, ValueError):
    """A rich-stream line does not match the line grammar."""

    def __init__(self, message, line, column):
        self.line = line
        self.column = column
        super().__init__(f'line {line}, column {column}: {message}')


class EmptySegment(LongscribeError, ValueError):
    pass


class MissingTimings(LongscribeError, ValueError):
    pass


class UnsortedInput(LongscribeError, ValueError):
    pass


class EmptyReference(LongscribeError, ValueError):
    pass


class MissingPair(LongscribeError, LookupError):
    pass


class DimensionMismatch(LongscribeError, ValueError):
    pass


class LengthMismatch(LongscribeError, ValueError):
    pass


class BadParams(LongscribeError, ValueError):
    pass


class BadStage(LongscribeError, ValueError):
    pass


class EmptyCorpus(LongscribeError, ValueError):
    pass
