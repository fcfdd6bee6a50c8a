"""Canonical encoding, digests, and MACs shared by every wire surface.

Every control object that gets hashed, MACed, or framed (operation requests,
grants, remote envelopes, evidence records, policy documents) is first
reduced to canonical JSON: UTF-8, lexicographically sorted keys, no
insignificant whitespace, integers in minimal base-10 form. Floats are
rejected outright so the byte encoding stays reproducible across languages
and library versions. Equal objects therefore encode to equal bytes, and a
SHA-256 over those bytes is a stable identity for the object.
"""

from __future__ import annotations

import hashlib
import hmac
import json

# Hash of "nothing before this record": 32 zero bytes.
GENESIS_HASH = b"\x00" * 32

_SCALARS = (str, int, bool, type(None))


class CanonicalEncodingError(ValueError):
    """Value cannot be canonically encoded (floats, exotic types, non-str keys)."""


def _check(value, path):
    if isinstance(value, bool) or value is None or isinstance(value, (str, int)):
        return
    if isinstance(value, float):
        raise CanonicalEncodingError(f"float at {path or '$'} breaks canonical form")
    if isinstance(value, dict):
        for key in value:
            if not isinstance(key, str):
                raise CanonicalEncodingError(f"non-string key at {path or '$'}")
            _check(value[key], f"{path}.{key}")
        return
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _check(item, f"{path}[{i}]")
        return
    raise CanonicalEncodingError(
        f"unencodable {type(value).__name__} at {path or '$'}"
    )


def encode(value) -> bytes:
    """Return the canonical JSON bytes for a JSON-shaped value."""
    _check(value, "")
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def digest(value) -> bytes:
    return hashlib.sha256(encode(value)).digest()


def hexdigest(value) -> str:
    return hashlib.sha256(encode(value)).hexdigest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def mac_hex(key: bytes, value) -> str:
    """HMAC-SHA256 over the canonical encoding, lowercase hex."""
    return hmac.new(key, encode(value), hashlib.sha256).hexdigest()


def mac_valid(key: bytes, value, tag: str) -> bool:
    if not isinstance(tag, str):
        return False
    return hmac.compare_digest(mac_hex(key, value), tag.lower())


def mac_fields(key: bytes, fields: dict, exclude: str = "mac") -> str:
    """MAC over a field dict with the tag field itself left out."""
    body = {k: v for k, v in fields.items() if k != exclude}
    return mac_hex(key, body)


def mac_fields_valid(key: bytes, fields: dict, exclude: str = "mac") -> bool:
    tag = fields.get(exclude)
    if not isinstance(tag, str):
        return False
    body = {k: v for k, v in fields.items() if k != exclude}
    return mac_valid(key, body, tag)
