"""Exception types shared across the pipeline.

The CLI maps ValidationError to exit code 1 and IntegrityError to exit
code 2; everything else is a bug.
"""


class CriticLoopError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CriticLoopError):
    """Malformed input: bad files, bad records, violated invariants."""


class IntegrityError(CriticLoopError):
    """Inconsistent state between artifacts (stores, gold sets, batches)."""


class ResponseParseError(ValidationError):
    """Model output contained no parseable JSON object."""


class ResponseSchemaError(ValidationError):
    """Model output parsed as JSON but violated the response contract."""


class TransientProviderError(CriticLoopError):
    """Retryable provider failure (timeouts, 429, 5xx)."""


class PermanentProviderError(CriticLoopError):
    """Non-retryable provider failure (4xx other than 429, missing script)."""
