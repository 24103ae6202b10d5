"""
# src/infrastructure/utils

Third-party component-independent tools: content hashing for caching and provenance

第三方组件无关工具: 用于缓存与溯源的内容哈希
"""


from .hashing import canonical_json, hash_document, hash_file, hash_tree


__all__ = ["canonical_json", "hash_document", "hash_file", "hash_tree"]
