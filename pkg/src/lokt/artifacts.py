"""Artifact persistence: manifests, digests and the per-run lock file.

Every stage output carries a manifest with the experiment config digest
and the seed it was produced under, so downstream stages can refuse to
mix artifacts from different configurations.
"""

from __future__ import annotations

import hashlib
import json
import os
from contextlib import contextmanager
from pathlib import Path


class MissingPrerequisiteError(FileNotFoundError):
    pass


class ConfigMismatchError(RuntimeError):
    pass


class OutputLockedError(RuntimeError):
    pass


def canonical_digest(obj) -> str:
    """Digest of a JSON-serialisable object, invariant to key ordering."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode()).hexdigest()


def array_digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(memoryview(a.tobytes()) if hasattr(a, "tobytes") else bytes(a))
    return h.hexdigest()


def write_manifest(path: Path, **fields) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(fields, indent=2, default=str))


def read_manifest(path: Path) -> dict:
    return json.loads(Path(path).read_text())


def require_artifact(path: Path, description: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingPrerequisiteError(
            f"missing prerequisite: {description} expected at {path}"
        )
    return path


def check_digest(manifest: dict, expected_digest: str, what: str, overwrite: bool) -> None:
    found = manifest.get("config_digest")
    if found != expected_digest and not overwrite:
        raise ConfigMismatchError(
            f"{what} was produced under config digest {found}, current config is "
            f"{expected_digest}; pass --overwrite to replace it"
        )


@contextmanager
def output_lock(out_dir: Path):
    """One stage process at a time per output directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lokt.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OutputLockedError(
            f"output directory {out_dir} is locked by another stage ({lock})"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)
