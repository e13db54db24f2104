import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnnopt.data import (
    N_PITCHES,
    UNK,
    PianoRollSong,
    TokenCorpus,
    build_class_partition,
    chunk,
    dataset_from_pairs,
    index_to_pitch,
    load_pianoroll,
    load_text,
    pitch_to_index,
    save_pianoroll,
)
from rnnopt.errors import DataError, InputError, ParseError


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


class TestPianoRoll:
    def test_chord_bits(self, tmp_path):
        songs = load_pianoroll(write_lines(tmp_path / "a.jsonl", [{"song_id": "a", "steps": [[60, 64, 67]]}]))
        assert len(songs) == 1 and len(songs[0]) == 1
        roll = songs[0].roll()
        assert roll.shape == (1, N_PITCHES)
        np.testing.assert_array_equal(np.flatnonzero(roll[0]), [39, 43, 46])

    def test_empty_steps(self, tmp_path):
        with pytest.raises(DataError):
            load_pianoroll(write_lines(tmp_path / "a.jsonl", [{"song_id": "a", "steps": []}]))

    def test_out_of_range_pitch(self, tmp_path):
        with pytest.raises(DataError):
            load_pianoroll(write_lines(tmp_path / "a.jsonl", [{"song_id": "a", "steps": [[20]]}]))

    def test_parse_error_line_number(self, tmp_path):
        p = tmp_path / "a.jsonl"
        p.write_text('{"song_id": "a", "steps": [[60]]}\n\n{"song_id": "b", "steps": [[61]\n')
        with pytest.raises(ParseError) as exc:
            load_pianoroll(p)
        assert exc.value.line == 3

    def test_missing_field(self, tmp_path):
        with pytest.raises(ParseError):
            load_pianoroll(write_lines(tmp_path / "a.jsonl", [{"steps": [[60]]}]))

    def test_non_integer_pitch(self, tmp_path):
        with pytest.raises(ParseError):
            load_pianoroll(write_lines(tmp_path / "a.jsonl", [{"song_id": "a", "steps": [[60.5]]}]))

    def test_round_trip(self, tmp_path):
        songs = [PianoRollSong("x", [[60, 64], [], [21, 108]]), PianoRollSong("y", [[70]])]
        save_pianoroll(songs, tmp_path / "a.jsonl")
        again = load_pianoroll(tmp_path / "a.jsonl")
        assert [(s.song_id, s.steps) for s in again] == [(s.song_id, s.steps) for s in songs]
        save_pianoroll(again, tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_roll_round_trip(self):
        song = PianoRollSong("z", [[60, 64, 67], [], [21]])
        assert PianoRollSong.from_roll("z", song.roll()).steps == song.steps

    def test_pitch_index_bijection(self):
        assert [index_to_pitch(pitch_to_index(p)) for p in range(21, 109)] == list(range(21, 109))
        with pytest.raises(InputError):
            pitch_to_index(109)
        with pytest.raises(InputError):
            index_to_pitch(88)


class TestText:
    def test_word_example(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("ab a")
        corpus = load_text(p, "word")
        assert set(corpus.vocab) == {"ab", "a"}
        assert [corpus.vocab[i] for i in corpus.tokens] == ["ab", "a"]
        np.testing.assert_array_equal(corpus.tokens, [0, 1])

    def test_char_example(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("aba")
        corpus = load_text(p, "char")
        assert len(corpus.vocab) == 2 and len(corpus.tokens) == 3

    def test_word_beyond_rank_is_unknown(self, tmp_path):
        # word i occurs (10003 - i) times, so w10000.. fall past rank 10000
        words = [f"w{i}" for i in range(10003)]
        p = tmp_path / "t.txt"
        p.write_text(" ".join(words * 2 + words[:10000]))
        corpus = load_text(p, "word")
        assert len(corpus.vocab) == 10001 and corpus.vocab[-1] == UNK
        assert np.sum(corpus.tokens == corpus.unk_id) == 6
        assert "w0" in corpus.vocab and "w10001" not in corpus.vocab

    def test_given_vocab_maps_unknown(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("a b c")
        corpus = load_text(p, "word", vocab=["a", UNK])
        np.testing.assert_array_equal(corpus.tokens, [0, 1, 1])

    def test_given_vocab_without_unknown(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("a b")
        with pytest.raises(DataError):
            load_text(p, "word", vocab=["a"])

    def test_empty_file(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("")
        with pytest.raises(DataError):
            load_text(p, "char")

    def test_max_chars(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("abcdef")
        assert len(load_text(p, "char", max_chars=4).tokens) == 4

    def test_bad_level(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("abc")
        with pytest.raises(InputError):
            load_text(p, "sentence")


def corpus_from_counts(counts):
    tokens = np.repeat(np.arange(len(counts)), counts)
    return TokenCorpus(tokens, [f"w{i}" for i in range(len(counts))], "word")


class TestClassPartition:
    def test_single_class(self):
        part = build_class_partition(corpus_from_counts([5, 3, 2, 1]), K=1)
        np.testing.assert_array_equal(part.class_of, 0)

    def test_uniform_one_word_per_class(self):
        part = build_class_partition(corpus_from_counts([4] * 30), K=30)
        assert sorted(part.class_of) == list(range(30))

    def test_zipf_head_word_alone(self):
        counts = np.round(1000 / np.arange(1, 51)).astype(int)
        part = build_class_partition(corpus_from_counts(counts), K=5)
        assert counts[0] / counts.sum() >= 0.2
        np.testing.assert_array_equal(part.members(0), [0])

    def test_classes_follow_frequency(self):
        counts = np.round(1000 / np.arange(1, 201)).astype(int)
        part = build_class_partition(corpus_from_counts(counts), K=10)
        assert np.all(np.diff(part.class_of) >= 0)
        assert part.token_mass.sum() == pytest.approx(1.0)
        assert all(len(part.members(k)) > 0 for k in range(10))

    def test_too_many_classes(self):
        with pytest.raises(InputError):
            build_class_partition(corpus_from_counts([1, 1, 1]), K=4)

    def test_k_zero(self):
        with pytest.raises(InputError):
            build_class_partition(corpus_from_counts([1, 1]), K=0)


@settings(max_examples=50, deadline=None)
@given(counts=st.lists(st.integers(1, 200), min_size=1, max_size=60), k=st.integers(1, 60))
def test_partition_is_complete_and_non_empty(counts, k):
    k = min(k, len(counts))
    part = build_class_partition(corpus_from_counts(counts), K=k)
    assert set(part.class_of.tolist()) == set(range(k))


class TestChunk:
    def test_250_steps(self):
        song = PianoRollSong("s", [[60 + t % 5] for t in range(250)])
        ds = chunk([song], 100)
        # the last chunk spans song steps 200..249 (50 steps), i.e. 49 input/target pairs
        assert [len(c) for c in ds.chunks] == [100, 100, 49]
        assert [c.carry_from for c in ds.chunks] == [None, 0, 1]
        assert ds.n_targets == 249

    def test_no_carry_across_songs(self):
        songs = [PianoRollSong("a", [[60]] * 5), PianoRollSong("b", [[61]] * 5)]
        ds = chunk(songs, 3)
        assert [c.carry_from for c in ds.chunks] == [None, 0, None, 2]
        assert ds.streams() == [[0, 1], [2, 3]]
        assert {c.source for c in ds.chunks} == {"a", "b"}

    def test_single_step_song_dropped(self):
        songs = [PianoRollSong("a", [[60]]), PianoRollSong("b", [[61], [62]])]
        ds = chunk(songs, 4)
        assert len(ds.chunks) == 1 and ds.chunks[0].source == "b"

    def test_targets_shifted(self):
        song = PianoRollSong("a", [[21 + t] for t in range(23)])
        roll = song.roll()
        for c in chunk([song], 5).chunks:
            np.testing.assert_array_equal(c.inputs[1:], c.targets[:-1])
        # reconstruct: all inputs, then the final target
        ds = chunk([song], 5)
        rebuilt = np.concatenate([c.inputs for c in ds.chunks] + [ds.chunks[-1].targets[-1:]])
        np.testing.assert_array_equal(rebuilt, roll)

    def test_token_stream(self):
        corpus = TokenCorpus(np.arange(10), [str(i) for i in range(10)], "character")
        ds = chunk(corpus, 4)
        assert [len(c) for c in ds.chunks] == [4, 4, 1]
        assert [c.carry_from for c in ds.chunks] == [None, 0, 1]
        np.testing.assert_array_equal(ds.chunks[1].inputs, [4, 5, 6, 7])
        np.testing.assert_array_equal(ds.chunks[1].targets, [5, 6, 7, 8])

    def test_length_too_short(self):
        with pytest.raises(InputError):
            chunk(np.arange(5), 1)

    def test_pairs(self):
        ds = dataset_from_pairs([(np.zeros((3, 2)), np.ones((3, 1)), np.array([0, 0, 1]))])
        assert ds.chunk_length == 3
        assert ds.chunks[0].carry_from is None
        np.testing.assert_array_equal(ds.chunks[0].weights, [0, 0, 1])


@settings(max_examples=50, deadline=None)
@given(lengths=st.lists(st.integers(1, 40), min_size=1, max_size=5), chunk_length=st.integers(2, 12))
def test_chunking_is_lossless(lengths, chunk_length):
    streams = [np.arange(n) + 1000 * i for i, n in enumerate(lengths)]
    ds = chunk(streams, chunk_length)
    assert ds.n_targets == sum(n - 1 for n in lengths)
    assert all(1 <= len(c) <= chunk_length for c in ds.chunks)
    for chain, seq in zip(ds.streams(), [s for s in streams if len(s) > 1]):
        np.testing.assert_array_equal(np.concatenate([ds.chunks[i].inputs for i in chain]), seq[:-1])
        np.testing.assert_array_equal(np.concatenate([ds.chunks[i].targets for i in chain]), seq[1:])
