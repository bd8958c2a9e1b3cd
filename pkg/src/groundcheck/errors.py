"""Exception types shared across the package."""


class GroundcheckError(Exception):
    """Base class for all package errors."""


class ConfigError(GroundcheckError):
    """Invalid or incomplete run configuration."""


class IngestError(GroundcheckError):
    """Malformed record encountered while ingesting a corpus."""


class DuplicateDocumentError(IngestError):
    """A doc_id appeared more than once in an ingestion stream."""


class DocumentNotFoundError(GroundcheckError):
    """Lookup of an unknown doc_id."""


class CorpusError(GroundcheckError):
    """Corrupt or incompatible persisted index."""


class GraphLoadError(GroundcheckError):
    """Malformed entity or edge record while loading the knowledge graph."""


class UnknownEntityError(GroundcheckError):
    """An operation referenced an entity id absent from the graph."""


class BenchmarkConstructionError(GroundcheckError):
    """Benchmark construction could not satisfy its contract for a task."""


class TransportError(GroundcheckError):
    """Transient provider failure (network error, timeout, 429/5xx)."""


class ProviderError(GroundcheckError):
    """Non-retryable provider failure, carrying status and a body excerpt."""

    def __init__(self, message, status=None, body_excerpt=""):
        super().__init__(message)
        self.status = status
        self.body_excerpt = body_excerpt


class MockScriptError(GroundcheckError):
    """The scripted mock provider received a request it has no answer for."""


class ParseError(GroundcheckError):
    """Model output did not contain a usable structured block."""


class StructuredOutputError(GroundcheckError):
    """Structured output still unparseable after the bounded re-prompt."""

    def __init__(self, message, last_text=""):
        super().__init__(message)
        self.last_text = last_text
