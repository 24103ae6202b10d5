"""
# src/infrastructure/base_registries

Registry base class shared by every pluggable family

可插拔组件族共用的注册器基类
"""


from .base_registry import LMAStandard


__all__ = ["LMAStandard"]
