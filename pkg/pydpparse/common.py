"""Common utilities and classes."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import hashlib
from importlib.metadata import PackageNotFoundError, version as _pkg_version
import os
from pathlib import Path
from typing import Any, Iterator

from .exceptions import ConfigurationError, CorpusReadError

SEED_ENV = "DPPARSE_SEED"
THREADS_ENV = "DPPARSE_THREADS"
_HASH_BLOCK = 1 << 16


def package_version() -> str:
    """Returns the installed version of pydpparse."""
    try:
        return _pkg_version("pydpparse")
    except PackageNotFoundError:
        return "0+unknown"


def sha256_file(path: str | os.PathLike[str]) -> str:
    """Returns the hex SHA-256 digest of a file's contents."""
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            while block := f.read(_HASH_BLOCK):
                digest.update(block)
    except OSError as ex:
        raise CorpusReadError(f"cannot read {path}: {ex}") from ex
    return digest.hexdigest()


def read_lines(path: str | os.PathLike[str]) -> Iterator[tuple[int, str]]:
    """Yields (1-based line number, line) pairs of a UTF-8 text file.

    Line terminators are stripped; nothing else is.

    :raise pydpparse.exceptions.CorpusReadError: When the file is missing or
        is not valid UTF-8.
    """
    try:
        with open(path, encoding="utf-8", newline="") as f:
            for lineno, line in enumerate(f, start=1):
                yield lineno, line.rstrip("\r\n")
    except UnicodeDecodeError as ex:
        raise CorpusReadError(f"{path} is not valid UTF-8: {ex}") from ex
    except OSError as ex:
        raise CorpusReadError(f"cannot read {path}: {ex}") from ex


def _env_int(name: str) -> int | None:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError as ex:
        raise ConfigurationError(f"{name} must be an integer, got {raw!r}") from ex


@dataclass(frozen=True)
class RunConfig:
    """Global settings shared by every command."""

    seed: int = 0
    """Seed for every randomized stage; recorded in each report."""

    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    """Upper bound on worker threads used by parallel sections."""

    log_level: str = "WARNING"
    """Logging level name for the command line tool."""

    output_dir: Path | None = None
    """Directory for generated files, or None for the working directory."""

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must fit in an unsigned 64-bit integer")

    @classmethod
    def from_env(
        cls, *, seed: int | None = None, threads: int | None = None, **kwargs
    ) -> RunConfig:
        """Creates a RunConfig from explicit values, then the environment.

        Explicit arguments win over ``DPPARSE_SEED`` / ``DPPARSE_THREADS``,
        which win over the defaults.
        """
        if seed is None:
            seed = _env_int(SEED_ENV)
        if threads is None:
            threads = _env_int(THREADS_ENV)
        if seed is not None:
            kwargs["seed"] = seed
        if threads is not None:
            kwargs["threads"] = threads
        return cls(**kwargs)

    def resolve(self, name: str) -> Path:
        """Returns the path of a generated file inside the output directory."""
        if self.output_dir is None:
            return Path(name)
        return self.output_dir / name

    def to_json(self) -> dict[str, Any]:
        """Returns a JSON dict of this RunConfig."""
        json = asdict(self)
        json["output_dir"] = None if self.output_dir is None else str(self.output_dir)
        return json
