"""Seeded synthetic corpora with entity corruptions spread across hypotheses."""

from __future__ import annotations

import json
import random
from pathlib import Path

# entity phrase -> near-miss renderings an ASR system might produce
ENTITIES = {
    "Cytiva": ["sitiva", "citeva"],
    "Lufthansa": ["left hansa"],
    "linezolid": ["linear zolid"],
    "amlodipine": ["amplodifin", "amnodipine"],
    "Max Planck Institute": ["max black institute"],
    "oscar kilo papa romeo mike": ["oscar kill papa romeo mike"],
    "Chronicles": ["chronic holes"],
    "metformin": ["met forming"],
    "Novartis": ["no vartis"],
    "Ryanair": ["rye an air"],
}
FILLERS = ["uh", "um"]
TEMPLATES = [
    "we spoke with {0} about the quarterly results",
    "the report from {0} arrived this morning",
    "please confirm the booking with {0} and {1}",
    "yesterday {0} announced a new partnership with {1}",
    "the doctor prescribed {0} for the patient",
    "traffic reported {0} climbing to flight level three",
    "our team compared {0} against {1} last week",
]


def _render(template: str, forms: list[str]) -> str:
    return " ".join(template.format(*forms).split())


def make_corpus(n_segments: int = 50, n_hyps: int = 5, seed: int = 7) -> tuple[list[dict], dict[str, str]]:
    """Return (segment records, corruption table for a lookup proposer).

    Hypothesis 0 always carries a near-miss for every entity.  The other
    hypotheses get each entity right, wrong (near-miss) or partly deleted at
    random, and occasionally a filler word, so errors are complementary.
    """
    rng = random.Random(seed)
    names = sorted(ENTITIES)
    records = []
    for n in range(n_segments):
        template = rng.choice(TEMPLATES)
        slots = template.count("{")
        chosen = rng.sample(names, slots)
        reference = _render(template, chosen)
        hyps = []
        for h in range(n_hyps):
            forms = []
            for ent in chosen:
                lowered = ent.lower()
                if h == 0:
                    forms.append(rng.choice(ENTITIES[ent]))
                    continue
                roll = rng.random()
                if roll < 0.5:
                    forms.append(lowered)
                elif roll < 0.8:
                    forms.append(rng.choice(ENTITIES[ent]))
                else:
                    words = lowered.split()
                    forms.append(" ".join(words[:-1]) if len(words) > 1 else "")
            text = _render(template, forms)
            if h > 0 and rng.random() < 0.3:
                words = text.split()
                words.insert(rng.randrange(len(words) + 1), rng.choice(FILLERS))
                text = " ".join(words)
            hyps.append(text)
        records.append(
            {
                "segment_id": f"seg-{n:03d}",
                "reference": reference,
                "hypotheses": hyps,
                "metadata": {"temperatures": "0.0,0.2,0.4,0.6,0.8"},
            }
        )
    table = {bad: good for good, bads in ENTITIES.items() for bad in bads}
    return records, table


def lexicon_lines(extra: int = 0, seed: int = 11) -> list[str]:
    rng = random.Random(seed)
    lines = list(ENTITIES)
    letters = "bcdfghjklmnprstvz"
    for _ in range(extra):
        lines.append("".join(rng.choice(letters) + rng.choice("aeiou") for _ in range(rng.randint(2, 4))))
    return lines


def write_corpus(directory: Path, n_segments: int = 50, seed: int = 7, extra_lexicon: int = 40) -> dict[str, Path]:
    records, table = make_corpus(n_segments, seed=seed)
    directory.mkdir(parents=True, exist_ok=True)
    seg = directory / "segments.jsonl"
    seg.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    lex = directory / "lexicon.txt"
    lex.write_text("\n".join(dict.fromkeys(lexicon_lines(extra_lexicon))) + "\n", encoding="utf-8")
    script = directory / "mock.json"
    script.write_text(json.dumps({"corrections": table}, indent=1), encoding="utf-8")
    return {"segments": seg, "lexicon": lex, "mock_script": script}
