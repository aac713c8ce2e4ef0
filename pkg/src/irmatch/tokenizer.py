"""Instruction text normalization and a small byte-pair vocabulary.

Identifiers collapse to the atomic marker [VAR] so the model cannot
memorize register names. Merges are learned per corpus with a frequency
threshold of 2 and deterministic lexicographic tie-breaking. Sequences
are padded or cut to a power-of-two length derived from the corpus mean.
"""

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

from .errors import CorruptPayload, EmptyCorpus, VersionMismatch
from .graph import ProgramGraph
from .parser import ID_RE
from .util import next_pow2_at_least_mean

PAD_ID = 0
UNK_ID = 1
VAR_ID = 2
PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
VAR_TOKEN = "[VAR]"
SPECIALS = (PAD_TOKEN, UNK_TOKEN, VAR_TOKEN)

PUNCTUATION = ",=()[]{}*"
_SENTINEL = "\x01"

FEATURE_MODES = ("full_text", "text")


def normalize_instruction(text: str) -> str:
    """Collapse %/@ identifiers to [VAR], space out punctuation, squeeze
    whitespace. Applying it twice changes nothing."""
    text = ID_RE.sub(VAR_TOKEN, text)
    text = text.replace(VAR_TOKEN, _SENTINEL)
    out = []
    for ch in text:
        if ch in PUNCTUATION:
            out.append(" " + ch + " ")
        else:
            out.append(ch)
    text = "".join(out).replace(_SENTINEL, VAR_TOKEN)
    return " ".join(text.split())


@dataclass
class TokenVocabulary:
    entries: List[str]
    merges: List[Tuple[str, str]]
    feature_mode: str
    truncation_length: int
    _ids: Dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self._ids:
            self._ids = {tok: i for i, tok in enumerate(self.entries)}

    def __len__(self) -> int:
        return len(self.entries)

    def token_id(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def tokenize_word(self, word: str) -> List[str]:
        if word == VAR_TOKEN:
            return [VAR_TOKEN]
        toks = list(word)
        for a, b in self.merges:
            toks = _apply_merge(toks, a, b)
            if len(toks) == 1:
                break
        return toks

    def encode(self, text: str) -> List[int]:
        """Fixed-length id row: normalized, merged, padded/cut."""
        ids: List[int] = []
        for word in normalize_instruction(text).split():
            ids.extend(self.token_id(t) for t in self.tokenize_word(word))
        ids = ids[: self.truncation_length]
        ids.extend([PAD_ID] * (self.truncation_length - len(ids)))
        return ids


def _apply_merge(toks: List[str], a: str, b: str) -> List[str]:
    out: List[str] = []
    i = 0
    n = len(toks)
    while i < n:
        if i + 1 < n and toks[i] == a and toks[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(toks[i])
            i += 1
    return out


def train_vocabulary(corpus: Iterable[str], vocab_size: int = 2048,
                     feature_mode: str = "full_text") -> TokenVocabulary:
    """Learn merges by greedy pair frequency. Ties break on the smaller
    (left, right) pair; training stops when the best pair occurs once or
    the table is full. Merging never crosses a space."""
    if feature_mode not in FEATURE_MODES:
        raise ValueError("unknown feature_mode %r" % feature_mode)
    texts = list(corpus)
    if not texts:
        raise EmptyCorpus("no node strings to train on")

    word_freq: Counter = Counter()
    for text in texts:
        word_freq.update(normalize_instruction(text).split())
    if not word_freq:
        raise EmptyCorpus("corpus normalized to nothing")

    chars = sorted({ch for w in word_freq if w != VAR_TOKEN for ch in w})
    entries: List[str] = list(SPECIALS) + chars
    known = set(entries)
    merges: List[Tuple[str, str]] = []

    pieces = {w: list(w) for w in word_freq if w != VAR_TOKEN}
    while len(entries) < vocab_size:
        pairs: Counter = Counter()
        for w, toks in pieces.items():
            f = word_freq[w]
            for pair in zip(toks, toks[1:]):
                pairs[pair] += f
        if not pairs:
            break
        best_count = max(pairs.values())
        if best_count < 2:
            break
        a, b = min(p for p, c in pairs.items() if c == best_count)
        merges.append((a, b))
        merged = a + b
        if merged not in known:
            known.add(merged)
            entries.append(merged)
        for w in pieces:
            pieces[w] = _apply_merge(pieces[w], a, b)

    vocab = TokenVocabulary(entries=entries, merges=merges,
                            feature_mode=feature_mode, truncation_length=1)
    total = 0
    for text in texts:
        for word in normalize_instruction(text).split():
            total += len(vocab.tokenize_word(word))
    vocab.truncation_length = next_pow2_at_least_mean(total, len(texts))
    return vocab


def node_string(node, feature_mode: str) -> str:
    return node.full_text if feature_mode == "full_text" else node.text


def corpus_from_graphs(graphs: Iterable[ProgramGraph], feature_mode: str) -> List[str]:
    return [node_string(n, feature_mode) for g in graphs for n in g.nodes]


def encode_node(vocab: TokenVocabulary, text: str) -> List[int]:
    return vocab.encode(text)


def encode_graph(vocab: TokenVocabulary, graph: ProgramGraph) -> List[List[int]]:
    return [vocab.encode(node_string(n, vocab.feature_mode)) for n in graph.nodes]


def save_vocabulary(vocab: TokenVocabulary, path: str) -> None:
    payload = {
        "version": 1,
        "feature_mode": vocab.feature_mode,
        "truncation_length": vocab.truncation_length,
        "entries": vocab.entries,
        "merges": [list(m) for m in vocab.merges],
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))


def load_vocabulary(path: str) -> TokenVocabulary:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorruptPayload(str(exc)) from exc
    if payload.get("version") != 1:
        raise VersionMismatch("vocabulary version %r" % payload.get("version"))
    try:
        return TokenVocabulary(
            entries=list(payload["entries"]),
            merges=[tuple(m) for m in payload["merges"]],
            feature_mode=payload["feature_mode"],
            truncation_length=int(payload["truncation_length"]),
        )
    except (KeyError, TypeError) as exc:
        raise CorruptPayload("missing vocabulary field: %s" % exc) from exc
