"""Piano-roll and text corpora, word classes, and chunking with state carryover.

Piano-roll files hold one JSON record per line::

    {"song_id": "a", "steps": [[60, 64, 67], [], [62]]}

Each step lists the MIDI pitches sounding at that step (21..108). Bit ``p - 21``
of the 88-wide frame encodes pitch ``p``.
"""

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InputError, ParseError

PITCH_MIN = 21
PITCH_MAX = 108
N_PITCHES = PITCH_MAX - PITCH_MIN + 1
UNK = "<unk>"
WORD_VOCAB_SIZE = 10000


@dataclass(frozen=True)
class PianoRollSong:
    song_id: str
    steps: tuple

    def __post_init__(self):
        steps = tuple(tuple(sorted(int(p) for p in s)) for s in self.steps)
        if not steps:
            raise DataError(f"song {self.song_id!r} has no steps")
        for s in steps:
            for p in s:
                if not PITCH_MIN <= p <= PITCH_MAX:
                    raise DataError(f"song {self.song_id!r}: pitch {p} outside [{PITCH_MIN}, {PITCH_MAX}]")
        object.__setattr__(self, "steps", steps)

    def __len__(self):
        return len(self.steps)

    def roll(self):
        """Binary ``[T, 88]`` matrix."""
        out = np.zeros((len(self.steps), N_PITCHES), dtype=np.int8)
        for t, s in enumerate(self.steps):
            out[t, [p - PITCH_MIN for p in s]] = 1
        return out

    @classmethod
    def from_roll(cls, song_id, roll):
        return cls(song_id, [tuple(int(i) + PITCH_MIN for i in np.flatnonzero(row)) for row in roll])


def pitch_to_index(pitch):
    if not PITCH_MIN <= pitch <= PITCH_MAX:
        raise InputError(f"pitch {pitch} outside [{PITCH_MIN}, {PITCH_MAX}]")
    return pitch - PITCH_MIN


def index_to_pitch(index):
    if not 0 <= index < N_PITCHES:
        raise InputError(f"index {index} outside [0, {N_PITCHES})")
    return index + PITCH_MIN


def load_pianoroll(path):
    songs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", lineno) from None
            if not isinstance(rec, dict) or "song_id" not in rec or "steps" not in rec:
                raise ParseError("record needs 'song_id' and 'steps'", lineno)
            steps = rec["steps"]
            if not isinstance(steps, list) or not all(
                isinstance(s, list) and all(isinstance(p, int) and not isinstance(p, bool) for p in s)
                for s in steps
            ):
                raise ParseError("'steps' must be a list of lists of integer pitches", lineno)
            try:
                songs.append(PianoRollSong(str(rec["song_id"]), steps))
            except DataError as e:
                raise DataError(f"line {lineno}: {e}") from None
    return songs


def save_pianoroll(songs, path):
    with open(path, "w", encoding="utf-8") as f:
        for song in songs:
            rec = {"song_id": song.song_id, "steps": [list(s) for s in song.steps]}
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")


@dataclass(frozen=True, eq=False)
class TokenCorpus:
    tokens: np.ndarray
    vocab: list
    level: str

    @property
    def unk_id(self):
        try:
            return self.vocab.index(UNK)
        except ValueError:
            return None


def _tokenize(text, level):
    if level == "character":
        return list(text)
    if level == "word":
        return text.split()
    raise InputError(f"unknown text level {level!r}")


def load_text(path, level, vocab=None, max_vocab=WORD_VOCAB_SIZE, max_chars=None):
    """Read a UTF-8 text file as a token stream.

    Without ``vocab`` one is built from the file: characters in order of first
    appearance, or the ``max_vocab`` most frequent words (ties by first
    appearance) plus ``<unk>`` for the rest. With ``vocab``, symbols missing
    from it map to ``<unk>``, which must then be present.
    """
    level = {"char": "character"}.get(level, level)
    text = Path(path).read_text(encoding="utf-8")
    if max_chars is not None:
        text = text[:max_chars]
    symbols = _tokenize(text, level)
    if not symbols:
        raise DataError(f"{path}: no tokens")

    if vocab is None:
        if level == "character":
            vocab = list(dict.fromkeys(symbols))
        else:
            counts = Counter(symbols)
            vocab = [w for w, _ in counts.most_common(max_vocab)]
            if len(counts) > max_vocab and UNK not in vocab:
                vocab.append(UNK)
    index = {s: i for i, s in enumerate(vocab)}
    unk = index.get(UNK)
    ids = np.empty(len(symbols), dtype=np.int64)
    for n, s in enumerate(symbols):
        i = index.get(s, unk)
        if i is None:
            raise DataError(f"{path}: symbol {s!r} not in vocabulary and no {UNK} entry")
        ids[n] = i
    return TokenCorpus(ids, list(vocab), level)


@dataclass(frozen=True, eq=False)
class ClassPartition:
    class_of: np.ndarray
    K: int
    token_mass: np.ndarray

    def members(self, k):
        return np.flatnonzero(self.class_of == k)


def build_class_partition(corpus, K=30):
    """Frequency-binned word classes.

    Words are visited by descending training count (ties by id) and appended
    to the current class, which closes once it holds at least 1/K of the
    tokens. Classes are never left empty: when the remaining words just cover
    the remaining classes, each gets one word.
    """
    tokens = corpus.tokens if isinstance(corpus, TokenCorpus) else np.asarray(corpus)
    vocab_size = len(corpus.vocab) if isinstance(corpus, TokenCorpus) else int(tokens.max()) + 1
    if K < 1:
        raise InputError("K must be >= 1")
    if K > vocab_size:
        raise InputError(f"K={K} exceeds vocabulary size {vocab_size}")
    counts = np.bincount(tokens, minlength=vocab_size)
    total = int(counts.sum())
    order = sorted(range(vocab_size), key=lambda w: (-counts[w], w))

    class_of = np.empty(vocab_size, dtype=np.int64)
    k, acc = 0, 0
    for n, w in enumerate(order):
        class_of[w] = k
        acc += int(counts[w])
        words_left = vocab_size - n - 1
        classes_left = K - k - 1
        if classes_left and (acc * K >= total or words_left == classes_left):
            k, acc = k + 1, 0
    mass = np.bincount(class_of, weights=counts, minlength=K) / max(total, 1)
    return ClassPartition(class_of, K, mass)


@dataclass(frozen=True, eq=False)
class Chunk:
    inputs: np.ndarray
    targets: np.ndarray
    carry_from: int | None = None
    source: str = ""
    weights: np.ndarray | None = None

    def __len__(self):
        return len(self.targets)


@dataclass(frozen=True, eq=False)
class SequenceDataset:
    chunks: list
    chunk_length: int

    @property
    def n_targets(self):
        return sum(len(c) for c in self.chunks)

    def streams(self):
        """Chunk indices grouped into carryover chains, in order."""
        chains, where = [], {}
        for i, c in enumerate(self.chunks):
            if c.carry_from is None:
                where[i] = len(chains)
                chains.append([i])
            else:
                where[i] = where[c.carry_from]
                chains[where[i]].append(i)
        return chains


def _streams(source):
    if isinstance(source, TokenCorpus):
        return [("corpus", source.tokens)]
    if isinstance(source, np.ndarray):
        return [("stream", source)]
    out = []
    for n, item in enumerate(source):
        if isinstance(item, PianoRollSong):
            out.append((item.song_id, item.roll().astype(float)))
        else:
            out.append((f"stream{n}", np.asarray(item)))
    return out


def chunk(source, chunk_length):
    """Split streams into consecutive next-step prediction chunks.

    Each stream of ``T`` steps gives ``T - 1`` (input, target) pairs, which are
    cut into runs of ``chunk_length`` pairs (the last run may be shorter).
    Consecutive chunks of one stream are linked by ``carry_from``; streams of
    a single step are dropped.
    """
    if chunk_length < 2:
        raise InputError("chunk_length must be >= 2")
    chunks = []
    for name, seq in _streams(source):
        n_pairs = len(seq) - 1
        prev = None
        for start in range(0, max(n_pairs, 0), chunk_length):
            stop = min(start + chunk_length, n_pairs)
            chunks.append(Chunk(seq[start:stop], seq[start + 1:stop + 1], prev, name))
            prev = len(chunks) - 1
    return SequenceDataset(chunks, chunk_length)


def dataset_from_pairs(pairs, chunk_length=None):
    """Independent chunks from explicit ``(inputs, targets[, weights])`` tuples, no carryover."""
    chunks = []
    for n, pair in enumerate(pairs):
        inputs, targets, *rest = pair
        chunks.append(Chunk(np.asarray(inputs), np.asarray(targets), None, f"seq{n}",
                            np.asarray(rest[0], dtype=float) if rest else None))
    length = chunk_length or max((len(c) for c in chunks), default=0)
    return SequenceDataset(chunks, length)
