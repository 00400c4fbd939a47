from spcnav.utils import *

import os


def test_is_iterable():
    assert is_iterable([1, 2])
    assert is_iterable((x for x in range(2)))
    assert not is_iterable("abc")
    assert not is_iterable(42)


def test_stable_seed():
    assert stable_seed("label", "door", 8) == stable_seed("label", "door", 8)
    assert stable_seed("label", "door", 8) != stable_seed("label", "door", 9)
    assert 0 <= stable_seed(1, 2, 3) < 2**32


def test_file_hash(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("spcnav")
    b.write_text("spcnav")
    assert file_hash(str(a)) == file_hash(str(b))
    assert len(file_hash(str(a))) == 64

    b.write_text("other")
    assert file_hash(str(a)) != file_hash(str(b))


def test_jsonl(tmp_path):
    filename = str(tmp_path / "records.jsonl")
    dump_jsonl([{"b": 1, "a": [1, 2]}, {"c": None}], filename)
    with open(filename) as f:
        assert f.readline() == '{"a": [1, 2], "b": 1}\n'
    assert load_jsonl(filename) == [{"a": [1, 2], "b": 1}, {"c": None}]

    dump_jsonl([], filename)
    assert os.path.getsize(filename) == 0
    assert load_jsonl(filename) == []
