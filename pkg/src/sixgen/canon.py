"""Canonical serialization and content hashing.

All hashes in the system are computed over one canonical JSON encoding:
sorted keys, no whitespace, non-ASCII kept verbatim, UTF-8 bytes. Two nodes
that disagree on a single byte of a payload will disagree on every hash
derived from it, which is the point.
"""

import hashlib
import json

GENESIS_PREV_HASH = "0" * 64


def canonical_bytes(doc) -> bytes:
    return json.dumps(
        doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def doc_hash(doc) -> str:
    return sha256_hex(canonical_bytes(doc))


def tx_id(payload, channel: str, submitter: str) -> str:
    # Channel and submitter are mixed in so the same payload submitted twice
    # in different contexts never collides.
    h = hashlib.sha256()
    h.update(canonical_bytes(payload))
    h.update(channel.encode("utf-8"))
    h.update(submitter.encode("utf-8"))
    return h.hexdigest()


def block_hash(height: int, prev_hash: str, tx_ids: list) -> str:
    h = hashlib.sha256()
    h.update(str(height).encode("ascii"))
    h.update(prev_hash.encode("ascii"))
    for t in tx_ids:
        h.update(t.encode("ascii"))
    return h.hexdigest()
