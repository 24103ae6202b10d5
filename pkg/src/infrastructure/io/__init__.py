"""
# src/infrastructure/io

File formats of the pipeline: NIfTI-1 volumes, CSV tables and static SVG figures

流水线使用的文件格式: NIfTI-1 体数据, CSV 表格与静态 SVG 图
"""


from .volume_io import write_array, read_array, write_volume, read_volume
from .table_io import write_table, read_table
from .svg_plots import strain_bar_chart, quiver_mid_slice


__all__ = [
    "write_array",
    "read_array",
    "write_volume",
    "read_volume",
    "write_table",
    "read_table",
    "strain_bar_chart",
    "quiver_mid_slice",
]
