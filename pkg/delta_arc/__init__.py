"""
delta-arc: delta 導向的架構描述語言工具鏈
解析元件模型與 delta 模型，計算套用順序並產生產品架構
"""

from .delta_engine import DeltaModel, apply_delta, apply_op
from .errors import DeltaArcError, Diagnostic, Location
from .frontend import (SourceUnit, parse_component_text, parse_config_text, parse_delta_text,
                       parse_types_text, pretty_print)
from .generation import DerivationRequest, DerivationResult, derive_product, structural_equal
from .model import ComponentDefinition, ModelRepository, TypeHierarchy
from .ordering import ProductConfiguration, compute_order, enumerate_orders
from .wellformedness import CheckReport, check_full, check_local

__version__ = "1.0.0"
