import collections
import hashlib
import json


class SpcNavError(Exception):
    pass


def is_iterable(object):
    """Whether the object is an iterable (excluding a string)"""
    return isinstance(object, collections.abc.Iterable) and not isinstance(object, str)


def file_hash(filename):
    """Compute the SHA256 hex digest of a file's content"""
    sha = hashlib.sha256()
    with open(filename, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def stable_seed(*parts):
    """Derive a reproducible 32bit seed from a number of hashable parts

    This is independent of Python's hash randomization, so it can be used
    to seed random generators from e.g. labels or coordinates.
    """
    digest = hashlib.sha256(repr(parts).encode()).hexdigest()
    return int(digest[:8], 16)


def dump_jsonl(records, filename):
    """Write a sequence of JSON objects to a file, one per line"""
    with open(filename, "w") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True))
            f.write("\n")


def load_jsonl(filename):
    """Read a JSON-lines file into a list of objects"""
    with open(filename, "r") as f:
        return [json.loads(line) for line in f if line.strip()]
