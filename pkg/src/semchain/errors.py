"""Exception types shared across the package."""


class SemchainError(Exception):
    """Base class for every error this package raises deliberately."""


# --- ingest ---------------------------------------------------------------

class FormatError(SemchainError):
    """Raw input is malformed for its declared format."""


class EmptySourceError(SemchainError):
    """A source yielded zero attributes."""


# --- ontology -------------------------------------------------------------

class SchemaError(SemchainError):
    """A JSON document does not match the expected structure."""


class InheritanceCycleError(SemchainError):
    """A class or property inheritance chain is cyclic."""


class DanglingNameError(SemchainError):
    """A class or property name is referenced but never declared."""


# --- semantic models ------------------------------------------------------

class InstanceParseError(SemchainError):
    """A class-instance string could not be parsed into name and index."""


class CyclicModelError(SemchainError):
    """The internal links of a semantic model contain a directed cycle."""


# --- prompting ------------------------------------------------------------

class TemplateError(SemchainError):
    """A prompt template misses a placeholder or carries an unknown one."""


class EmptyExamplesError(SemchainError):
    """A system prompt was requested with no in-context examples."""


class Step1ParseError(SemchainError):
    """A labeling answer does not contain usable semantic labels."""


# --- llm ------------------------------------------------------------------

class NoAnswerError(SemchainError):
    """No machine-readable answer could be extracted from a response."""


class ProviderError(SemchainError):
    """A provider call failed."""


class AuthError(ProviderError):
    """Credentials are missing or were rejected."""


class RateLimitExhaustedError(ProviderError):
    """Rate-limit retries were exhausted."""


class ProviderTimeoutError(ProviderError):
    """The provider did not answer within the configured timeout."""


# --- harness --------------------------------------------------------------

class ShotTooLargeError(SemchainError):
    """The shot setting asks for more known examples than the split has."""
