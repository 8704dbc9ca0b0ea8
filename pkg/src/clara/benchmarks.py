"""Bundled synthetic benchmark generators.

Production corpora for this task are proprietary, so the test suite and the
ablation harness run on synthetic data that reproduces the *shape* of the
problem: a 3-level taxonomy with 24 leaf intents, single-turn training
utterances, and multi-turn sessions whose final query is either
self-contained or an anaphoric follow-up that only the session context can
disambiguate.  Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import LabeledExample, Session
from .taxonomy import Intent, Taxonomy

_TREE = {
    "Logistics": {
        "Delivery": ["Track Package", "Late Delivery", "Change Address"],
        "Returns": ["Return Item", "Refund Status", "Damaged Product"],
        "Shipping": ["Shipping Fees", "Courier Options", "International Shipping"],
    },
    "Account": {
        "Access": ["Reset Password", "Unlock Account", "Update Email"],
        "Profile": ["Change Username", "Delete Account", "Verify Identity"],
        "Security": ["Report Fraud", "Suspicious Login", "Two Factor Setup"],
    },
    "Payments": {
        "Billing": ["Invoice Request", "Payment Failed", "Double Charge"],
        "Methods": ["Add Card", "Remove Card"],
        "Promotions": ["Apply Voucher"],
    },
}

_TRAIN_OPENERS = [
    "how do i",
    "i need help with",
    "please assist me to",
    "can you help me",
    "i want to",
    "what is the process to",
]
_TRAIN_CLOSERS = [
    "for my order",
    "for my account",
    "right now",
    "as soon as possible",
    "",
    "today",
]
_TEST_OPENERS = [
    "could you tell me how to",
    "i am trying to",
    "help me",
    "tell me the steps to",
]
_TEST_CLOSERS = ["for my recent purchase", "before tomorrow", "", "please"]

# final turns that carry no intent signal on their own
_FOLLOW_UPS = [
    "it is still not working",
    "i did not receive any update yet",
    "please help me with this problem",
    "what should i do next",
    "can you check this again",
    "this is urgent please respond",
    "i already tried that and nothing changed",
    "that did not solve my issue",
]
_NEUTRAL_OPENERS = [
    "hi",
    "hello there",
    "good morning",
    "hi i have a question",
    "hey quick question",
    "hello i need some help",
]


def build_taxonomy() -> Taxonomy:
    """The 24-leaf benchmark knowledge base (3 roots, 9 mid categories)."""
    paths = sorted(
        (root, mid, leaf)
        for root, mids in _TREE.items()
        for mid, leaves in mids.items()
        for leaf in leaves
    )
    intents = []
    for i, path in enumerate(paths):
        leaf = path[2]
        intents.append(
            Intent(
                id=f"I{i:03d}",
                title=leaf,
                category_path=path,
                rep_query=f"i would like to know how to {leaf.lower()} for my recent order please",
                language="en",
            )
        )
    return Taxonomy(intents)


def _phrase(rng: np.random.Generator, slug: str, openers: list[str], closers: list[str]) -> str:
    opener = openers[int(rng.integers(len(openers)))]
    closer = closers[int(rng.integers(len(closers)))]
    return f"{opener} {slug} {closer}".strip()


def make_examples(taxonomy: Taxonomy, n: int, seed: int) -> list[LabeledExample]:
    """Single-turn utterances, one distinctive phrasing per example."""
    rng = np.random.default_rng(seed)
    intents = sorted(taxonomy.intents, key=lambda it: it.id)
    examples = []
    for j in range(n):
        intent = intents[j % len(intents)]
        text = _phrase(rng, intent.title.lower(), _TRAIN_OPENERS, _TRAIN_CLOSERS)
        examples.append(LabeledExample(query=text, intent_id=intent.id, language=intent.language))
    return examples


def make_sessions(
    taxonomy: Taxonomy,
    n: int,
    seed: int,
    id_prefix: str = "sess",
    held_out_phrasing: bool = False,
) -> list[Session]:
    """Gold-annotated multi-turn sessions.

    Half are self-contained (a neutral opener, then a distinctive final
    query); half are contextual (a distinctive query, then a generic
    follow-up as the final turn), where only the earlier turn reveals the
    intent.  ``held_out_phrasing`` switches to phrase templates never seen
    in the single-turn training pool.
    """
    openers = _TEST_OPENERS if held_out_phrasing else _TRAIN_OPENERS
    closers = _TEST_CLOSERS if held_out_phrasing else _TRAIN_CLOSERS
    rng = np.random.default_rng(seed)
    intents = sorted(taxonomy.intents, key=lambda it: it.id)
    sessions = []
    for j in range(n):
        intent = intents[int(rng.integers(len(intents)))]
        distinctive = _phrase(rng, intent.title.lower(), openers, closers)
        contextual = bool(rng.integers(2))
        long_session = rng.random() < 0.2
        if contextual:
            turns = [distinctive]
            if long_session:
                turns.append(_FOLLOW_UPS[int(rng.integers(len(_FOLLOW_UPS)))])
            turns.append(_FOLLOW_UPS[int(rng.integers(len(_FOLLOW_UPS)))])
        else:
            turns = [_NEUTRAL_OPENERS[int(rng.integers(len(_NEUTRAL_OPENERS)))]]
            if long_session:
                turns.append(_NEUTRAL_OPENERS[int(rng.integers(len(_NEUTRAL_OPENERS)))])
            turns.append(distinctive)
        sessions.append(
            Session(
                id=f"{id_prefix}-{j:06d}",
                turns=tuple(turns),
                gold_intent=intent.id,
            )
        )
    return sessions


@dataclass
class Benchmark:
    taxonomy: Taxonomy
    train_examples: list[LabeledExample]
    unlabeled_sessions: list[Session]
    test_sessions: list[Session]


def build_benchmark(
    seed: int = 7,
    n_train: int = 2000,
    n_unlabeled: int = 1200,
    n_test: int = 800,
) -> Benchmark:
    """The default desk-scale benchmark used by the acceptance suite."""
    taxonomy = build_taxonomy()
    return Benchmark(
        taxonomy=taxonomy,
        train_examples=make_examples(taxonomy, n_train, seed),
        unlabeled_sessions=make_sessions(taxonomy, n_unlabeled, seed + 1, id_prefix="chatlog"),
        test_sessions=make_sessions(
            taxonomy, n_test, seed + 2, id_prefix="test", held_out_phrasing=True
        ),
    )


def market_corpus(
    language: str,
    n_intents: int,
    n_train: int,
    n_test: int,
    seed: int = 0,
) -> tuple[Taxonomy, list[LabeledExample], list[Session]]:
    """A structurally market-shaped corpus: n intents, n train pairs, n test sessions."""
    rng = np.random.default_rng(seed)
    intents = []
    for i in range(n_intents):
        intents.append(
            Intent(
                id=f"{language}-I{i:04d}",
                title=f"Intent {i} Title",
                category_path=(f"Root {i % 4}", f"Group {i % 32}", f"Topic {i}"),
                rep_query=f"representative query for topic {i}",
                language=language,
            )
        )
    taxonomy = Taxonomy(intents)
    examples = [
        LabeledExample(
            query=f"train utterance {j} about topic {j % n_intents}",
            intent_id=intents[j % n_intents].id,
            language=language,
        )
        for j in range(n_train)
    ]
    sessions = []
    for j in range(n_test):
        intent = intents[int(rng.integers(n_intents))]
        sessions.append(
            Session(
                id=f"{language}-mt-{j:05d}",
                turns=(f"first question {j}", f"final question about {intent.title.lower()}"),
                gold_intent=intent.id,
            )
        )
    return taxonomy, examples, sessions
