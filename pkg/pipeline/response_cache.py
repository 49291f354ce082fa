"""
Content-addressed, on-disk cache of completion responses.

One file per request digest at ``<cache_dir>/<digest[:2]>/<digest>``. Each
entry holds the canonical request bytes, a separator line and the response
text (UTF-8), so entries can be audited by hand.
"""

import re
from pathlib import Path
from typing import Optional, Tuple, Union

from pydantic import BaseModel

from models.llm import CompletionRequest
from utils.helpers import atomic_write_bytes, sha256_hex
from utils.logging import get_pipeline_logger

logger = get_pipeline_logger("response_cache")

ENTRY_SEPARATOR = b"----- pragmabench response -----"
DIGEST_PATTERN = re.compile(r"^[0-9a-f]{64}$")


class CacheStats(BaseModel):
    entries: int
    total_bytes: int


class ResponseCache:
    def __init__(self, cache_dir: Union[str, Path]):
        self.cache_dir = Path(cache_dir)

    def entry_path(self, digest: str) -> Path:
        return self.cache_dir / digest[:2] / digest

    @staticmethod
    def encode_entry(request: CompletionRequest, text: str) -> bytes:
        return request.canonical_bytes() + b"\n" + ENTRY_SEPARATOR + b"\n" + text.encode("utf-8")

    def get(self, request: CompletionRequest, digest: Optional[str] = None) -> Optional[str]:
        """Stored response text, or None on a miss; corrupt entries count as misses."""
        digest = digest or sha256_hex(request.canonical_bytes())
        path = self.entry_path(digest)
        if not path.is_file():
            return None

        try:
            raw = path.read_bytes()
        except OSError as e:
            logger.warning(f"Unreadable cache entry {path}: {e}")
            return None

        prefix = request.canonical_bytes() + b"\n" + ENTRY_SEPARATOR + b"\n"
        if not raw.startswith(prefix):
            logger.warning(f"Corrupt cache entry {path}: request bytes do not match digest")
            return None
        try:
            return raw[len(prefix):].decode("utf-8")
        except UnicodeDecodeError:
            logger.warning(f"Corrupt cache entry {path}: response is not valid UTF-8")
            return None

    def put(self, request: CompletionRequest, text: str, digest: Optional[str] = None) -> Path:
        digest = digest or sha256_hex(request.canonical_bytes())
        path = self.entry_path(digest)
        atomic_write_bytes(path, self.encode_entry(request, text))
        return path

    def _entries(self):
        """Entries at any depth, so mock and repeat namespaces are included."""
        if not self.cache_dir.is_dir():
            return
        for entry in sorted(self.cache_dir.rglob("*")):
            if (
                entry.is_file()
                and DIGEST_PATTERN.match(entry.name)
                and entry.parent.name == entry.name[:2]
            ):
                yield entry

    def stats(self) -> CacheStats:
        entries = list(self._entries())
        return CacheStats(
            entries=len(entries), total_bytes=sum(e.stat().st_size for e in entries)
        )

    def clear(self) -> Tuple[int, int]:
        """Remove cache entries only; returns (entries removed, bytes freed)."""
        removed = freed = 0
        for entry in list(self._entries()):
            freed += entry.stat().st_size
            entry.unlink()
            removed += 1
            parent = entry.parent
            if not any(parent.iterdir()):
                parent.rmdir()
        logger.info(f"Removed {removed} cache entries from {self.cache_dir}")
        return removed, freed
