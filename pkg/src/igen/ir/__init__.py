"""Typed IR: model, text format, validation and preparation passes."""

from .hints import BranchHint, extract_branch_hints
from .model import Function, Global, Module, External, Signature
from .parser import parse_module
from .prepare import CallGraph, CalleeKind, classify_callee, lower_aggregate_access
from .printer import module_hash, print_module
from .types import align_of, size_of
from .validate import validate_module

__all__ = [
    "BranchHint", "CallGraph", "CalleeKind", "External", "Function", "Global", "Module",
    "Signature", "align_of", "classify_callee", "extract_branch_hints", "lower_aggregate_access",
    "module_hash", "parse_module", "print_module", "size_of", "validate_module",
]
