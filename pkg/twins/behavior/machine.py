"""
Executable state machine definition.

A BehaviorSpec names its states, the initial and final states, the
transitions between them and one entry action per state. Guards, effects
and entry actions are plain callables receiving the running twin.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import networkx as nx
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

Guard = Callable[[Any], bool]
Action = Callable[[Any], None]

AUTO = "auto"
SHUTDOWN_TRIGGER = "shutdown"


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    guard: Optional[Guard] = None
    trigger: str = AUTO
    effect: Optional[Action] = None
    name: str = ""

    def enabled(self, runtime) -> bool:
        return self.guard is None or bool(self.guard(runtime))


@dataclass
class BehaviorSpec:
    states: Tuple[str, ...]
    initial: str
    final: Tuple[str, ...]
    transitions: Tuple[Transition, ...]
    entry_actions: Dict[str, Action] = field(default_factory=dict)
    shutdown_state: Optional[str] = None

    def __post_init__(self):
        known = set(self.states)
        if self.initial not in known:
            raise ValueError(f"initial state {self.initial} is not declared")
        for t in self.transitions:
            if t.source not in known or t.target not in known:
                raise ValueError(f"transition {t.source} -> {t.target} uses undeclared states")
        for state in self.states:
            if state not in self.final and not self.outgoing(state, trigger=None):
                raise ValueError(f"non-final state {state} has no outgoing transition")
        if self.shutdown_state is not None:
            graph = self.graph()
            for state in self.states:
                if not nx.has_path(graph, state, self.shutdown_state):
                    raise ValueError(f"{self.shutdown_state} is unreachable from {state}")

    def outgoing(self, state: str, trigger: Optional[str] = AUTO) -> List[Transition]:
        """Transitions leaving ``state`` in declaration order; ``trigger=None`` matches any trigger."""
        return [t for t in self.transitions if t.source == state and (trigger is None or t.trigger == trigger)]

    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.states)
        graph.add_edges_from((t.source, t.target) for t in self.transitions)
        return graph


class TwinEvent(BaseModel):
    time_ms: int
    state: str
    event: str
    detail: Dict[str, Any] = Field(default_factory=dict)


class TransitionOutcome(BaseModel):
    source: str
    state: str
    fired: bool
    events: List[TwinEvent] = Field(default_factory=list)
