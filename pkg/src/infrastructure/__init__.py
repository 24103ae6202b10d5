"""
# src/infrastructure

Externally exposed basic components: field containers and numerics, file formats,
registries, hashing and the error hierarchy

对外暴露的基础组件: 场容器与数值算子, 文件格式, 注册表, 哈希与异常体系
"""


from . import errors
from .base_registries import LMAStandard
from . import fieldcore
from . import io
from .utils import canonical_json, hash_document, hash_file, hash_tree


__all__ = [
    "errors",
    "LMAStandard",
    "fieldcore",
    "io",
    "canonical_json",
    "hash_document",
    "hash_file",
    "hash_tree",
]
