"""
# src/app

Main function entry and the command line application

主函数入口与命令行程序
"""


from .services import main
from .app import app


__all__ = ["main", "app"]
