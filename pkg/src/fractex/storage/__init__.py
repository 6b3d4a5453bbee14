"""On-disk formats: volumes, checkpoints and reports."""

from .checkpoint import load_checkpoint, save_checkpoint
from .reports import load_report, render_table, save_report
from .volume_file import load_volume, save_volume

__all__ = [
    "load_checkpoint",
    "load_report",
    "load_volume",
    "render_table",
    "save_checkpoint",
    "save_report",
    "save_volume",
]
