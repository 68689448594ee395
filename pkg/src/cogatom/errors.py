"""Exception types shared across the pipeline."""


class CogAtomError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(CogAtomError):
    """Input data violates a schema or an invariant. CLI exit code 2."""


class UpstreamMissingError(CogAtomError):
    """A required upstream artifact does not exist. CLI exit code 3."""


class StaleArtifactError(ValidationError):
    """An artifact's recorded upstream hashes no longer match the files on disk."""


class ClientError(CogAtomError):
    """A generator/judge/embedder call failed after all retries. CLI exit code 4."""
