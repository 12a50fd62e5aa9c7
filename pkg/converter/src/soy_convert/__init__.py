"""Converters between external model/correspondence assets and the
fitting engine's file formats."""

from .iuv import iuv_to_dcm
from .official import convert_model
from .uvtable import LookupTable, build_table

__all__ = ["convert_model", "build_table", "LookupTable", "iuv_to_dcm"]
__version__ = "0.1.0"
