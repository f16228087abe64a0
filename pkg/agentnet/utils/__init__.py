import hashlib
import json
import os
import tempfile
import unicodedata
from enum import Enum
from fractions import Fraction

import regex


class JSONEncoder(json.JSONEncoder):
    """
    JSON encoder which encodes enums, fractions, sets and anything with a to_json method
    """

    def default(self, val):
        if isinstance(val, Enum):
            return val.name
        elif isinstance(val, Fraction):
            return str(val)
        elif isinstance(val, (set, frozenset)):
            return sorted(val)
        elif hasattr(val, "to_json") and callable(val.to_json):
            return val.to_json()

        return json.JSONEncoder.default(self, val)  # pragma: no cover


def json_encode(data, pretty=False):
    """
    Encodes the given primitives as JSON. Pretty output is indented with sorted keys so that documents are
    stable on disk.
    """
    if pretty:
        return json.dumps(data, cls=JSONEncoder, indent=2, sort_keys=True)
    return json.dumps(data, cls=JSONEncoder)


def json_decode(data):
    """
    Decodes the given JSON as primitives
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")

    return json.loads(data)


def normalize(text):
    """
    Normalizes text before comparison. Converts to lowercase, performs KD unicode normalization and replaces
    multiple whitespace characters with single spaces.
    """
    return unicodedata.normalize("NFKD", regex.sub(r"\s+", " ", text.lower())).strip()


def truncate(text, length=100, suffix="..."):
    """
    Truncates the given text to be no longer than the given length
    """
    if len(text) > length:
        return text[: length - len(suffix)] + suffix
    else:
        return text


def derive_seed(master, *parts):
    """
    Derives a child seed from a master seed and any number of labels (query ids, steps, agent ids...). The first 8
    bytes of a SHA-256 digest over the joined parts, so the same inputs always give the same seed on every platform.
    """
    key = "|".join(str(p) for p in (master,) + parts)
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


def atomic_write(path, text):
    """
    Writes text to the given path via a temporary file in the same directory and a rename, so readers never see a
    partially written document
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    fd, temp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json_decode(f.read())
