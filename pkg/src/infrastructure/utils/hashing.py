"""
# src/infrastructure/utils/hashing.py

Content hashes for stage caching and provenance

用于阶段缓存与溯源记录的内容哈希
"""


from pathlib import Path
from typing import Any, Iterable, Union
import hashlib
import json


_CHUNK = 1 << 20


def canonical_json(document: Any) -> str:
    """
    Sorted keys, no insignificant whitespace
    """
    return json.dumps(document, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def hash_document(document: Any) -> str:
    return hashlib.sha256(canonical_json(document).encode("utf-8")).hexdigest()


def hash_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(_CHUNK), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_tree(paths: Iterable[Union[str, Path]], root: Union[str, Path, None] = None) -> str:
    """
    Order-independent digest over (relative name, content hash) of every file under the given paths
    """
    entries = []
    for path in paths:
        path = Path(path)
        files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
        for file in files:
            name = file.relative_to(root).as_posix() if root is not None else file.as_posix()
            entries.append((name, hash_file(file)))
    return hash_document(sorted(entries))


__all__ = ["canonical_json", "hash_document", "hash_file", "hash_tree"]
