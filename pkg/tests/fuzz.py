"""Mutations that turn well-formed reasoner replies into mostly malformed ones."""

from __future__ import annotations


def mutate(text, rng):
    ops = [
        lambda s: s.replace("Thought:", "Thougth:", 1),
        lambda s: s.replace("Action Input:", "Input:", 1),
        lambda s: s.replace("{", "", 1),
        lambda s: s.replace("\n", " ", 1),
        lambda s: s + "\nObservation: made up",
        lambda s: s[: rng.randrange(len(s) + 1)],
        lambda s: "".join(rng.sample(s, len(s))),
        lambda s: s.upper(),
        lambda s: s.replace("Final Answer:", "Answer:"),
        lambda s: "Sure! " + s,
        lambda s: s.replace('"frame_id": 1', '"frame_id": "one"'),
        lambda s: s.replace("count_objects", rng.choice(["fly_drone", "count objects", "", "visual_qa"])),
        lambda s: s + "\n" + s,
        lambda s: s.replace(":", "", 1),
    ]
    for _ in range(rng.randint(1, 3)):
        text = rng.choice(ops)(text)
    return text
