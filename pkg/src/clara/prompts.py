"""In-context classification prompts.

Four template styles over the same retrieved demonstrations:

* ``base``       - demonstrations as user/assistant chat turns labelled
                   "The intent title is {label}."
* ``symbolic``   - demonstration labels replaced by opaque enumeration
                   tokens L1, L2, ... (the inverse mapping is returned).
* ``prepend``    - labels kept but prefixed with their enumeration token.
* ``formatted``  - demonstrations in a numbered block with an explicit
                   instruction and the candidate-label list.

Every prompt ends with the assistant prefix "The intent title is " so the
model generates the label continuation only.  Demonstrations can be ordered
ascending or descending by retrieval score, or shuffled by a seeded RNG.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .corpus import Session
from .errors import ClaraError, EmptySession
from .retrieval import Demonstration
from .taxonomy import Taxonomy

TEMPLATE_KINDS = ("base", "symbolic", "prepend", "formatted")
ORDERING_KINDS = ("ascending", "descending", "random")

SYSTEM_PREAMBLE = (
    "A chat between a curious user and an artificial intelligence assistant. "
    "The assistant provides helpful, detailed, and polite responses to the "
    "user's questions."
)
ANSWER_PREFIX = "The intent title is "


class NoDemonstrations(ClaraError):
    """Rendering requires at least one demonstration."""


@dataclass(frozen=True)
class Ordering:
    """How demonstrations are arranged in the prompt.

    The random kind is fully determined by its seed; the other kinds sort by
    score with ties broken by original position.
    """

    kind: str
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ORDERING_KINDS:
            raise ValueError(f"unknown ordering kind {self.kind!r}")
        if self.kind == "random" and self.seed is None:
            raise ValueError("random ordering requires a seed")


@dataclass(frozen=True)
class RenderedPrompt:
    messages: tuple[tuple[str, str], ...]
    text: str
    label_map: dict[str, str]


def format_messages(messages: Sequence[tuple[str, str]]) -> str:
    """Single-string rendering of a message list, used for matching and logs."""
    return "\n".join(f"{role.upper()}: {content}" for role, content in messages)


def order_demos(demos: Sequence[Demonstration], ordering: Ordering) -> list[Demonstration]:
    """Arrange demonstrations per the ordering; stable tie-break by original index."""
    indexed = list(enumerate(demos))
    if ordering.kind == "ascending":
        indexed.sort(key=lambda pair: (pair[1].score, pair[0]))
    elif ordering.kind == "descending":
        indexed.sort(key=lambda pair: (-pair[1].score, pair[0]))
    else:
        rng = random.Random(ordering.seed)
        rng.shuffle(indexed)
    return [demo for _, demo in indexed]


def render(
    template: str,
    demos: Sequence[Demonstration],
    session: Session,
    ordering: Ordering,
    taxonomy: Taxonomy,
) -> RenderedPrompt:
    """Render one classification prompt.

    The label_map records every label surface shown in the prompt (and, for
    symbolic/prepend templates, the bare enumeration tokens) back to intent
    ids.  The session's gold intent is never read.
    """
    if template not in TEMPLATE_KINDS:
        raise ValueError(f"unknown template kind {template!r}")
    if not demos:
        raise NoDemonstrations("at least one demonstration is required")
    if not session.turns:
        raise EmptySession("session has no turns")

    arranged = order_demos(demos, ordering)
    surfaces = [taxonomy.intent(d.example.intent_id).label_surface() for d in arranged]

    label_map: dict[str, str] = {}
    messages: list[tuple[str, str]] = [("system", SYSTEM_PREAMBLE)]

    if template == "formatted":
        lines = ["Classify the intent of the user's final message."]
        lines.append("Valid intent titles:")
        seen = set()
        for demo, surface in zip(arranged, surfaces):
            if surface not in seen:
                seen.add(surface)
                lines.append(f"- {surface}")
            label_map[surface] = demo.example.intent_id
        lines.append("Labeled examples:")
        for i, (demo, surface) in enumerate(zip(arranged, surfaces), start=1):
            lines.append(f'{i}. "{demo.example.query}" -> {surface}')
        lines.append("The conversation follows. Answer with one intent title only.")
        messages.append(("user", "\n".join(lines)))
    else:
        for i, (demo, surface) in enumerate(zip(arranged, surfaces), start=1):
            token = f"L{i}"
            if template == "symbolic":
                shown = token
                label_map[token] = demo.example.intent_id
            elif template == "prepend":
                shown = f"{token} {surface}"
                label_map[token] = demo.example.intent_id
                label_map[shown] = demo.example.intent_id
            else:
                shown = surface
                label_map[surface] = demo.example.intent_id
            messages.append(("user", demo.example.query))
            messages.append(("assistant", f"{ANSWER_PREFIX}{shown}."))

    for turn in session.turns:
        messages.append(("user", turn))
    messages.append(("assistant", ANSWER_PREFIX))

    frozen = tuple(messages)
    return RenderedPrompt(messages=frozen, text=format_messages(frozen), label_map=label_map)
