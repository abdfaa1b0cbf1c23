"""Consistency checks between published alignment counts and published rates.

Given per-dataset C/S/D/I counts and entity reference token totals, the
E-WER each system implies is recomputed and compared with the printed value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .evaluation import AlignmentCounts, rwerr, wer

E_WER_TOL_PP = 0.01
RWERR_TOL_PP = 0.1


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def load_fixture(path: str | Path | None = None) -> dict:
    if path is None:
        text = resources.files("recover").joinpath("data", "published_counts.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return json.loads(text)


def _counts(entry: dict) -> AlignmentCounts:
    return AlignmentCounts(entry["C"], entry["S"], entry["D"], entry["I"])


def check_tables(fixture: dict) -> list[Check]:
    checks = []
    baseline = fixture.get("baseline", "baseline")
    for ds in fixture["datasets"]:
        n_ref = ds["entity_reference_tokens"]
        implied = {}
        for system, entry in ds["systems"].items():
            counts = _counts(entry)
            label = f"{ds['name']} / {system}"
            checks.append(
                Check(f"{label} C+S+D", counts.n_ref == n_ref, f"{counts.n_ref} vs {n_ref} entity reference tokens")
            )
            e_wer = 100.0 * wer(counts)
            implied[system] = e_wer
            if "e_wer" in entry:
                gap = abs(e_wer - entry["e_wer"])
                checks.append(
                    Check(
                        f"{label} E-WER",
                        gap <= E_WER_TOL_PP,
                        f"({counts.substitutions}+{counts.deletions}+{counts.insertions})/{n_ref} = {e_wer:.4f}% "
                        f"vs printed {entry['e_wer']:.2f}% (|diff| {gap:.4f} pp)",
                    )
                )
        for system, entry in ds["systems"].items():
            if system == baseline or "rwerr" not in entry:
                continue
            value = rwerr(implied[baseline], implied[system])
            gap = abs(value - entry["rwerr"])
            checks.append(
                Check(
                    f"{ds['name']} / {system} RWERR",
                    gap <= RWERR_TOL_PP,
                    f"{value:.2f}% vs printed {entry['rwerr']:.1f}% (|diff| {gap:.3f} pp)",
                )
            )
        if "delta" in ds:
            systems = [s for s in ds["systems"] if s != baseline]
            if len(systems) == 1:
                base, other = _counts(ds["systems"][baseline]), _counts(ds["systems"][systems[0]])
                got = {
                    "C": other.correct - base.correct,
                    "S": other.substitutions - base.substitutions,
                    "D": other.deletions - base.deletions,
                    "I": other.insertions - base.insertions,
                }
                checks.append(Check(f"{ds['name']} delta", got == ds["delta"], f"{got} vs printed {ds['delta']}"))
    return checks
