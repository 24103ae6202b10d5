"""
# src/app/services

Pipeline lifecycle management for the command line front end

为命令行前端提供流水线生命周期管理
"""


from .pipeline_service import setup_logging, load_run_config, load_manifest, MAPExecute, main


__all__ = ["setup_logging", "load_run_config", "load_manifest", "MAPExecute", "main"]
