"""Generate-and-validate loop with a content-addressed artifact cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ..codec import atomic_write
from .prompt import TEMPLATE_VERSION, build_prompt
from .provider import CandidateProgram, request_candidates
from .validate import validate_candidate

log = logging.getLogger(__name__)


def cache_key(families, template_version=TEMPLATE_VERSION) -> str:
    doc = json.dumps({"families": sorted(families), "template_version": template_version}, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:32]


@dataclass
class MaskGeneratorArtifact:
    candidate: CandidateProgram
    validity_rate: float
    accepted: bool
    cache_key: str
    families: list
    template_version: int = TEMPLATE_VERSION
    # run bookkeeping, never persisted
    history: list = field(default_factory=list, compare=False)
    cache_hit: bool = field(default=False, compare=False)
    provider_calls: int = field(default=0, compare=False)
    diagnostics: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        if self.accepted and self.validity_rate != 1.0:
            raise ValueError("only candidates with validity 1.0 can be accepted")

    def to_json(self) -> str:
        return json.dumps({
            "accepted": self.accepted, "cache_key": self.cache_key, "candidate_id": self.candidate.id,
            "families": sorted(self.families), "source": self.candidate.source,
            "template_version": self.template_version, "validity_rate": self.validity_rate,
        }, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MaskGeneratorArtifact":
        d = json.loads(text)
        cand = CandidateProgram(d["source"])
        if cand.id != d["candidate_id"]:
            raise ValueError("artifact source does not match its recorded id")
        return cls(cand, float(d["validity_rate"]), bool(d["accepted"]), d["cache_key"],
                   list(d["families"]), int(d["template_version"]))


class ArtifactCache:
    """Accepted artifacts stored as <cache_key>.json; single writer, atomic replace."""

    def __init__(self, directory):
        self.dir = os.fspath(directory)

    def path(self, key) -> str:
        return os.path.join(self.dir, f"{key}.json")

    def get(self, key):
        try:
            with open(self.path(key), encoding="utf-8") as fh:
                text = fh.read()
        except FileNotFoundError:
            return None
        return MaskGeneratorArtifact.from_json(text)

    def put(self, artifact: MaskGeneratorArtifact) -> str:
        os.makedirs(self.dir, exist_ok=True)
        p = self.path(artifact.cache_key)
        atomic_write(p, artifact.to_json())
        return p


def synthesize(task, provider, cache: ArtifactCache | None = None, on_round=None) -> MaskGeneratorArtifact:
    """Rounds of request + validate; the first candidate at validity 1.0 is accepted.

    An exhausted budget returns the best candidate seen with ``accepted=False``.
    """
    key = cache_key(task.spec.families)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            hit.cache_hit = True
            return hit
    calls0 = getattr(provider, "calls", 0)
    history, diagnostics = [], []
    best = None
    feedback = ""
    rounds, per_round = task.budget
    for rnd in range(1, rounds + 1):
        prompt = build_prompt(task, feedback)
        cands = request_candidates(provider, prompt, per_round, diagnostics)
        with ThreadPoolExecutor(max_workers=max(1, len(cands))) as pool:
            results = list(pool.map(lambda c: validate_candidate(c, task), cands))
        history.append(results)
        if on_round is not None:
            on_round(rnd, results)
        for cand, res in zip(cands, results):
            if best is None or res.validity_rate > best[1].validity_rate:
                best = (cand, res)
        winner = next(((c, r) for c, r in zip(cands, results) if r.validity_rate == 1.0), None)
        if winner is not None:
            art = MaskGeneratorArtifact(winner[0], 1.0, True, key, sorted(task.spec.families))
            if cache is not None:
                cache.put(art)
            art.history, art.diagnostics = history, diagnostics
            art.provider_calls = getattr(provider, "calls", 0) - calls0
            return art
        failures = sorted((r for r in results), key=lambda r: -r.validity_rate)
        feedback = "\n".join(r.summary() for r in failures[:2])
    if best is None:
        art = MaskGeneratorArtifact(CandidateProgram(""), 0.0, False, key, sorted(task.spec.families))
    else:
        art = MaskGeneratorArtifact(best[0], best[1].validity_rate, False, key, sorted(task.spec.families))
    art.history, art.diagnostics = history, diagnostics
    art.provider_calls = getattr(provider, "calls", 0) - calls0
    return art
