"""Canonical JSON helpers.

Every artifact this package writes goes through canonical_dumps so that
identical content is identical bytes: sorted keys, no whitespace, shortest
round-trip float repr, newline-terminated lines.
"""

from __future__ import annotations

import json


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        f.write(canonical_dumps(obj))
        f.write("\n")


def write_jsonl(path, records) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(canonical_dumps(rec))
            f.write("\n")


def read_jsonl(path):
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)
