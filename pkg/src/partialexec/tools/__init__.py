"""Bundled tools and their registry bindings."""

from __future__ import annotations

from ..parser import GrammarId
from ..plugins import Binding, Granularity, PluginDescriptor, Registry, StartCondition
from .calculator import Calculator
from .formatter import Formatter
from .interp import Interp, Interpreter
from .kvdb import KvDb
from .validator import Validator
from .websearch import MockSearchServer, WebSearch

FENCE, CALL, PLAN = GrammarId.FENCE, GrammarId.CALL, GrammarId.PLAN

BUILTINS = [
    (PluginDescriptor("interp", Binding(FENCE, "python"), Granularity.LINE), Interp),
    (PluginDescriptor("websearch", Binding(CALL, "search"), Granularity.FIELD,
                      StartCondition.ON_NAME_PARSED), WebSearch),
    (PluginDescriptor("kvdb", Binding(CALL, "db_query"), Granularity.WHOLE_CALL,
                      StartCondition.ON_NAME_PARSED), KvDb),
    (PluginDescriptor("calculator", Binding(CALL, "calculator"), Granularity.WHOLE_CALL), Calculator),
    (PluginDescriptor("validator", Binding(CALL, "get_news"), Granularity.FIELD,
                      StartCondition.ON_NAME_PARSED), Validator),
    (PluginDescriptor("plan_search", Binding(PLAN, "Search"), Granularity.STAGE), WebSearch),
    (PluginDescriptor("plan_calculator", Binding(PLAN, "Calculator"), Granularity.STAGE), Calculator),
    (PluginDescriptor("formatter", Binding(PLAN, "Format"), Granularity.STAGE), Formatter),
]


def builtin_registry() -> Registry:
    registry = Registry()
    for descriptor, factory in BUILTINS:
        registry.register(descriptor, factory)
    return registry


__all__ = ["BUILTINS", "builtin_registry", "Calculator", "Formatter", "Interp", "Interpreter", "KvDb",
           "MockSearchServer", "Validator", "WebSearch"]
