"""Canonicalization of raw activity labels and frequency-based edge pruning.

Raw open-vocabulary labels ("chatting with", "talking to") collapse onto
canonical frames (SPEAK) via a verb lexicon; per-human detection counts then
gate which edges survive:

    keep(e)  <=>  N(e) >= max(tau * M, n_min)

with M the largest count among the same human's edges, ``tau`` a relative
threshold in (0, 1], and ``n_min`` an absolute floor.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from .errors import EmptyLabelError, GraphParseError
from .graph import (
    ActivityEdge,
    FrameGlossaryEntry,
    SocialSceneGraph,
    is_valid_frame_name,
    minimal_glossary_entry,
)

DEFAULT_TAU = 0.4
DEFAULT_N_MIN = 2

# Leading tokens that never carry the activity sense of a label.
_SKIP_TOKENS = {
    "to", "with", "at", "on", "in", "of", "a", "an", "the",
    "is", "are", "am", "was", "were", "be", "been", "being",
}

# Lemmas that suffix stripping alone cannot recover.
_IRREGULAR = {
    "lying": "lie",
    "lain": "lie",
    "ate": "eat",
    "eaten": "eat",
    "sat": "sit",
    "stood": "stand",
    "spoke": "speak",
    "spoken": "speak",
    "said": "say",
    "told": "tell",
    "saw": "see",
    "seen": "see",
    "heard": "hear",
    "held": "hold",
    "slept": "sleep",
    "woke": "wake",
    "dying": "die",
    "tying": "tie",
}


@dataclass
class PruningConfig:
    """Thresholds for detection-frequency pruning."""

    tau: float = DEFAULT_TAU
    n_min: int = DEFAULT_N_MIN
    # "source" groups edges by the human they originate from; "target" is the
    # config-gated alternative reading of "edges from the same node".
    grouping: str = "source"

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.n_min < 1:
            raise ValueError(f"n_min must be >= 1, got {self.n_min}")
        if self.grouping not in ("source", "target"):
            raise ValueError(f"grouping must be 'source' or 'target', got {self.grouping!r}")

    def threshold(self, group_max: int) -> float:
        return max(self.tau * group_max, float(self.n_min))


@dataclass
class FrameLexicon:
    """Verb-to-frame synonym table plus glossary entries per frame."""

    synonyms: dict[str, str] = field(default_factory=dict)
    entries: dict[str, FrameGlossaryEntry] = field(default_factory=dict)

    def __post_init__(self):
        self.synonyms = {k.lower(): v for k, v in self.synonyms.items()}
        for verb, frame in self.synonyms.items():
            if frame not in self.entries:
                raise ValueError(f"synonym {verb!r} points at frame {frame!r} with no entry")

    def lookup(self, lemma: str) -> Optional[str]:
        return self.synonyms.get(lemma.lower())

    def add_frame(self, frame: str, entry: Optional[FrameGlossaryEntry] = None) -> FrameGlossaryEntry:
        if frame not in self.entries:
            self.entries[frame] = entry or minimal_glossary_entry(frame)
        return self.entries[frame]

    def add_synonym(self, verb: str, frame: str) -> None:
        if frame not in self.entries:
            raise ValueError(f"frame {frame!r} has no glossary entry")
        self.synonyms[verb.lower()] = frame

    def entry_for(self, frame: str) -> FrameGlossaryEntry:
        return self.entries.get(frame) or minimal_glossary_entry(frame)


def load_lexicon(path=None) -> FrameLexicon:
    """Load the shipped lexicon, or a user-provided lexicon file."""
    if path is None:
        raw = json.loads(resources.files("s3dsg.data").joinpath("lexicon.json").read_text("utf-8"))
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise GraphParseError(str(exc), path=str(path)) from None
        except json.JSONDecodeError as exc:
            raise GraphParseError(f"invalid JSON: {exc}", path=str(path)) from None
    entries = {}
    for rec in raw.get("entries", []):
        entry = FrameGlossaryEntry(
            frame=rec["frame"],
            description=rec["description"],
            gloss=rec["gloss"],
            example_actions=tuple(rec["example_actions"]),
        )
        entries[entry.frame] = entry
    return FrameLexicon(synonyms=dict(raw.get("synonyms", {})), entries=entries)


def _head_token(raw_label: str) -> str:
    tokens = re.findall(r"[a-z0-9'-]+", raw_label.lower())
    if not tokens:
        raise EmptyLabelError(f"no usable tokens in activity label {raw_label!r}")
    for tok in tokens:
        if tok not in _SKIP_TOKENS:
            return tok
    return tokens[0]


def _lemma_candidates(word: str) -> list[str]:
    """Deterministic suffix-stripping lemmatizer; first candidate is primary."""
    if word in _IRREGULAR:
        return [_IRREGULAR[word]]
    out = [word]
    if word.endswith("ing") and len(word) > 4:
        stem = word[:-3]
        if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in "aeiou":
            out.append(stem[:-1])  # chatting -> chat
        out.append(stem)  # talking -> talk
        out.append(stem + "e")  # using -> use
    if word.endswith("ied") and len(word) > 3:
        out.append(word[:-3] + "y")  # studied -> study
    elif word.endswith("ed") and len(word) > 3:
        stem = word[:-2]
        if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in "aeiou":
            out.append(stem[:-1])  # chatted -> chat
        out.append(stem)  # talked -> talk
        out.append(word[:-1])  # used -> use
    if word.endswith("ies") and len(word) > 3:
        out.append(word[:-3] + "y")
    elif word.endswith("es") and len(word) > 3:
        out.append(word[:-2])  # watches -> watch
        out.append(word[:-1])
    elif word.endswith("s") and not word.endswith("ss") and len(word) > 2:
        out.append(word[:-1])
    seen, uniq = set(), []
    for cand in out:
        if cand and cand not in seen:
            seen.add(cand)
            uniq.append(cand)
    return uniq


def _frame_name_from_lemma(lemma: str) -> str:
    name = re.sub(r"[^A-Za-z0-9]+", "_", lemma).strip("_").upper()
    if not is_valid_frame_name(name):
        name = "X" + name
    return name


def canonicalize(raw_label: str, lexicon: FrameLexicon) -> str:
    """Map an open-vocabulary activity label to a canonical frame name.

    Unknown head verbs found a new frame named after the uppercased lemma and
    the lexicon grows so later labels with the same verb reuse it.
    """
    if raw_label is None or not raw_label.strip():
        raise EmptyLabelError("activity label is empty")
    head = _head_token(raw_label)
    candidates = _lemma_candidates(head)
    for cand in candidates:
        frame = lexicon.lookup(cand)
        if frame is not None:
            return frame
    primary = candidates[1] if len(candidates) > 1 else candidates[0]
    frame = _frame_name_from_lemma(primary)
    lexicon.add_frame(frame)
    lexicon.add_synonym(primary, frame)
    return frame


def _group_key(edge: ActivityEdge, grouping: str) -> int:
    return edge.from_id if grouping == "source" else edge.to_id


def prune(graph: SocialSceneGraph, config: PruningConfig) -> tuple[SocialSceneGraph, list[dict]]:
    """Drop low-support activity edges; spatial edges are untouched.

    Returns the pruned graph (sharing node objects with the input) and a log
    with one record per removed edge.
    """
    groups: dict[int, int] = {}
    for edge in graph.activity_edges:
        key = _group_key(edge, config.grouping)
        groups[key] = max(groups.get(key, 0), edge.detection_count)

    kept, removal_log = [], []
    for edge in sorted(graph.activity_edges, key=lambda e: (e.from_id, e.to_id, e.frame)):
        threshold = config.threshold(groups[_group_key(edge, config.grouping)])
        if edge.detection_count >= threshold:
            kept.append(edge)
        else:
            removal_log.append(
                {
                    "from_id": edge.from_id,
                    "to_id": edge.to_id,
                    "frame": edge.frame,
                    "detection_count": edge.detection_count,
                    "threshold": threshold,
                }
            )

    out = SocialSceneGraph()
    out.nodes = dict(graph.nodes)
    out.spatial_edges = list(graph.spatial_edges)
    out.activity_edges = kept
    surviving = {e.frame for e in kept}
    out.frame_glossary = {
        frame: entry for frame, entry in graph.frame_glossary.items() if frame in surviving
    }
    for frame in surviving - set(out.frame_glossary):
        out.frame_glossary[frame] = minimal_glossary_entry(frame)
    return out, removal_log


def consolidate(
    graph: SocialSceneGraph,
    lexicon: Optional[FrameLexicon] = None,
    config: Optional[PruningConfig] = None,
) -> tuple[SocialSceneGraph, list[dict]]:
    """Re-canonicalize all edges, merge frame collisions, then prune.

    Edges whose raw labels collapse onto the same (human, target, frame)
    triple merge with their observation lists concatenated, so detection
    counts sum. Applying consolidate twice equals applying it once.
    """
    lexicon = lexicon or load_lexicon()
    config = config or PruningConfig()

    merged: dict[tuple[int, int, str], ActivityEdge] = {}
    for edge in sorted(graph.activity_edges, key=lambda e: (e.from_id, e.to_id, e.frame)):
        for raw_label, source in edge.observations:
            frame = canonicalize(raw_label, lexicon)
            key = (edge.from_id, edge.to_id, frame)
            if key not in merged:
                merged[key] = ActivityEdge(edge.from_id, edge.to_id, frame)
            merged[key].observations.append((raw_label, source))

    staged = SocialSceneGraph()
    staged.nodes = dict(graph.nodes)
    staged.spatial_edges = list(graph.spatial_edges)
    staged.activity_edges = [merged[k] for k in sorted(merged)]
    staged.frame_glossary = {
        key[2]: lexicon.entry_for(key[2]) for key in merged
    }

    pruned, removal_log = prune(staged, config)
    pruned.frame_glossary = {
        frame: lexicon.entry_for(frame) for frame in {e.frame for e in pruned.activity_edges}
    }
    return pruned, removal_log
