"""Manifests, task-level splits, and balanced pair generation.

A manifest is JSONL: one record per graph file with its task, origin
(source or binary), and language. Pair files are JSONL too: two graph
paths and a 0/1 label. All paths inside these files are stored relative
to the file that contains them, so a corpus directory can move.
"""

import json
import os
import random
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

from .errors import CorruptPayload, InsufficientNegatives, NoInputs, TooFewTasks

ORIGIN_SOURCE = "source"
ORIGIN_BINARY = "binary"


@dataclass(frozen=True)
class ManifestRecord:
    graph: str
    task: str
    lang: str
    origin: str


@dataclass(frozen=True)
class PairSample:
    a: str
    b: str
    label: int


@dataclass
class SplitSpec:
    train: List[str]
    val: List[str]
    test: List[str]


def scan_corpus(root: str) -> List[Tuple[str, str, str, str]]:
    """Walk a <task>/<origin>/<lang>/*.ll tree. Returns
    (path, task, origin, lang) tuples in sorted order."""
    found = []
    for dirpath, _, filenames in os.walk(root):
        for fname in sorted(filenames):
            if not fname.endswith(".ll"):
                continue
            rel = os.path.relpath(os.path.join(dirpath, fname), root)
            parts = rel.split(os.sep)
            if len(parts) != 4:
                continue
            task, origin, lang, _ = parts
            found.append((os.path.join(root, rel), task, origin, lang))
    if not found:
        raise NoInputs("no <task>/<origin>/<lang>/*.ll files under %s" % root)
    return sorted(found)


def _relativize(path: str, anchor_file: str) -> str:
    return os.path.relpath(os.path.abspath(path),
                           os.path.dirname(os.path.abspath(anchor_file)))


def _resolve(path: str, anchor_file: str) -> str:
    if os.path.isabs(path):
        return path
    return os.path.normpath(
        os.path.join(os.path.dirname(os.path.abspath(anchor_file)), path))


def write_manifest(records: Sequence[ManifestRecord], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({
                "graph": _relativize(r.graph, path), "task": r.task,
                "lang": r.lang, "origin": r.origin}, sort_keys=True) + "\n")


def read_manifest(path: str) -> List[ManifestRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(ManifestRecord(
                    graph=_resolve(obj["graph"], path), task=obj["task"],
                    lang=obj["lang"], origin=obj["origin"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorruptPayload("%s line %d: %s" % (path, lineno, exc)) from exc
    return records


def write_pairs(pairs: Sequence[PairSample], path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({
                "a": _relativize(p.a, path), "b": _relativize(p.b, path),
                "label": p.label}, sort_keys=True) + "\n")


def read_pairs(path: str) -> List[PairSample]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                label = int(obj["label"])
                if label not in (0, 1):
                    raise ValueError("label %r" % obj["label"])
                pairs.append(PairSample(
                    a=_resolve(obj["a"], path), b=_resolve(obj["b"], path),
                    label=label))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorruptPayload("%s line %d: %s" % (path, lineno, exc)) from exc
    return pairs


def split_by_task(tasks: Iterable[str], seed: int) -> SplitSpec:
    """Deterministic 6:2:2 split over distinct tasks. Validation and test
    each get max(1, round(0.2 * T)) tasks; training takes the rest."""
    distinct = sorted(set(tasks))
    if len(distinct) < 5:
        raise TooFewTasks("need at least 5 distinct tasks, got %d" % len(distinct))
    rng = random.Random(seed)
    rng.shuffle(distinct)
    n_hold = max(1, int(0.2 * len(distinct) + 0.5))
    n_train = len(distinct) - 2 * n_hold
    train = sorted(distinct[:n_train])
    val = sorted(distinct[n_train:n_train + n_hold])
    test = sorted(distinct[n_train + n_hold:])
    return SplitSpec(train=train, val=val, test=test)


def generate_pairs(records: Sequence[ManifestRecord], tasks: Sequence[str],
                   seed: int) -> List[PairSample]:
    """All same-task source/binary pairs as positives, an equal number of
    cross-task source/binary pairs as negatives, shuffled. Deterministic
    for a given seed."""
    wanted = set(tasks)
    sources = sorted((r for r in records
                      if r.task in wanted and r.origin == ORIGIN_SOURCE),
                     key=lambda r: r.graph)
    binaries = sorted((r for r in records
                       if r.task in wanted and r.origin == ORIGIN_BINARY),
                      key=lambda r: r.graph)
    positives = [
        PairSample(a=s.graph, b=b.graph, label=1)
        for s in sources for b in binaries
        if s.task == b.task and s.graph != b.graph
    ]
    candidates = [
        (s.graph, b.graph)
        for s in sources for b in binaries
        if s.task != b.task
    ]
    if len(candidates) < len(positives):
        raise InsufficientNegatives(
            "%d cross-task pairs available, %d needed"
            % (len(candidates), len(positives)))
    rng = random.Random(seed)
    sampled = rng.sample(candidates, len(positives))
    pairs = positives + [PairSample(a=a, b=b, label=0) for a, b in sampled]
    rng.shuffle(pairs)
    return pairs


def pair_task_index(records: Sequence[ManifestRecord]) -> Dict[str, ManifestRecord]:
    """Graph path -> manifest record, for error analysis lookups."""
    return {r.graph: r for r in records}
