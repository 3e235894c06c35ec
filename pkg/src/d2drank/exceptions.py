class D2DError(Exception):
    """Base class for data errors raised by this package."""


class ParseError(D2DError, ValueError):
    """Malformed input record.

    ``offset`` is a byte offset for SGML streams, ``line`` a 1-based line
    number for line-oriented formats; whichever does not apply is None.
    """

    def __init__(self, message, *, offset=None, line=None):
        where = []
        if offset is not None:
            where.append(f"byte {offset}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} (at {', '.join(where)})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class DuplicateDocumentError(D2DError, ValueError):
    def __init__(self, doc_id):
        super().__init__(f"duplicate document id {doc_id!r}")
        self.doc_id = doc_id


class IndexFormatError(D2DError):
    """Unreadable, truncated or version-mismatched index file."""


class MissingVectorError(D2DError, KeyError):
    def __init__(self, doc_ids):
        self.doc_ids = list(doc_ids)
        shown = ", ".join(self.doc_ids[:10])
        more = "" if len(self.doc_ids) <= 10 else f" (+{len(self.doc_ids) - 10} more)"
        super().__init__(f"no vector for documents: {shown}{more}")

    def __str__(self):
        return self.args[0]


class UndefinedMetricError(D2DError, ValueError):
    """A metric has no defined value for the given input."""
