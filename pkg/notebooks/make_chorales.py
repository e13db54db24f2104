"""Build a Bach-chorale piano-roll set from the music21 corpus.

The widely used JSB chorales pickle is not bundled anywhere installable, so
this script rebuilds an equivalent set from the chorale scores that ship with
music21: every chorale is transposed so its tonic is C, quantized to quarter
notes, and written as line-delimited piano-roll records. Songs are shuffled
with a fixed seed and split 60/20/20 into train/valid/test.

    pip install music21
    python notebooks/make_chorales.py data/jsb

Expect a few minutes; music21 parses each score from MusicXML.
"""

import sys
from pathlib import Path

import numpy as np

from rnnopt.data import PITCH_MAX, PITCH_MIN, PianoRollSong, save_pianoroll


def chorale_steps(score):
    key = score.analyze("key")
    shift = (-key.tonic.pitchClass) % 12
    if shift > 6:
        shift -= 12
    length = int(np.ceil(float(score.highestTime)))
    steps = [set() for _ in range(length)]
    for n in score.flatten().notes:
        start = float(n.offset)
        end = start + float(n.quarterLength)
        pitches = [p.midi + shift for p in n.pitches]
        # sample at beat onsets: a note belongs to step t if it sounds at time t
        for t in range(int(np.ceil(start)), min(int(np.ceil(end)), length)):
            steps[t].update(p for p in pitches if PITCH_MIN <= p <= PITCH_MAX)
    while steps and not steps[-1]:
        steps.pop()
    return [sorted(s) for s in steps]


def main(out_dir, seed=0):
    from music21 import corpus

    songs = []
    for i, score in enumerate(corpus.chorales.Iterator()):
        steps = chorale_steps(score)
        if len(steps) >= 2:
            name = score.metadata.title if score.metadata and score.metadata.title else f"chorale{i}"
            songs.append(PianoRollSong(f"{i:03d}-{name}", steps))
        if i % 50 == 0:
            print(f"{i} chorales parsed", file=sys.stderr)

    order = np.random.default_rng(seed).permutation(len(songs))
    n_train, n_valid = int(0.6 * len(songs)), int(0.2 * len(songs))
    parts = {
        "train": order[:n_train],
        "valid": order[n_train:n_train + n_valid],
        "test": order[n_train + n_valid:],
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, idx in parts.items():
        save_pianoroll([songs[i] for i in sorted(idx)], out / f"{split}.jsonl")
        print(f"{split}: {len(idx)} songs", file=sys.stderr)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/jsb")
