"""
# src/infrastructure/base_registries/base_registry.py

Registrar component, public base class template

注册器组件, 公共基类模版
"""


from __future__ import annotations
from typing import Any, Dict, List, Type, TypeVar, Generic


T = TypeVar("T", bound="LMAStandard")


class LMAStandard(Generic[T]):
    """
    Minimum implementing a name based registry and factory
    """

    _registry: Dict[str, Type[T]]

    def __init_subclass__(cls, **kwargs: Any) -> None: # pragma: no cover
        super().__init_subclass__(**kwargs)
        # Only direct children of LMAStandard open a new registry; deeper
        # subclasses register into their family's table
        if LMAStandard in cls.__bases__:
            cls._registry = {}

    @classmethod
    def register(cls: Type[T], name: str):
        """
        Register a subclass under ``name``.
        """

        def decorator(subcls: Type[T]) -> Type[T]:
            if name in cls._registry:
                raise KeyError(
                    f"{cls.__name__} kind '{name}' cannot be registered again."
                )
            cls._registry[name] = subcls
            subcls.kind = name
            return subcls

        return decorator

    @classmethod
    def create(cls: Type[T], kind: str, **kwargs: Any) -> T:
        """
        Instantiate a registered subclass by ``kind``.
        """

        subcls = cls._registry.get(kind)
        if subcls is None:
            valid = ", ".join(cls._registry.keys())
            raise ValueError(
                f"Unknown {cls.__name__} kind '{kind}'. Available: {valid}"
            )
        return subcls(**kwargs)

    @classmethod
    def available(cls) -> List[str]:
        """
        Registered kind names, in registration order
        """
        return list(cls._registry.keys())


__all__ = ["LMAStandard"]
