"""On-disk checkpoint container.

Layout: a magic line, the byte length of a human-readable JSON manifest,
the manifest itself, then every named tensor as little-endian float64 in
manifest index order.  Loading validates each declared shape against the
payload; save -> load -> save is byte-identical.
"""

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import Vocabulary
from .errors import DataError

MAGIC = b"SEQXFER1\n"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    manifest: dict
    tensors: dict
    word_vocab: Vocabulary = None
    char_vocab: Vocabulary = None

    @classmethod
    def create(cls, kind, architecture, tensors, word_vocab=None, char_vocab=None,
               provenance=None, metrics=None):
        manifest = {
            "format_version": FORMAT_VERSION,
            "kind": kind,
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "architecture": architecture,
            "provenance": provenance or [],
            "metrics": metrics or {},
        }
        return cls(manifest, dict(tensors), word_vocab, char_vocab)

    @property
    def architecture(self):
        return self.manifest["architecture"]

    def save(self, path):
        index = []
        payload = bytearray()
        for name in sorted(self.tensors):
            arr = np.ascontiguousarray(self.tensors[name], dtype="<f8")
            index.append({"name": name, "shape": list(arr.shape)})
            payload.extend(arr.tobytes())
        doc = dict(self.manifest)
        doc["tensor_index"] = index
        doc["word_vocab"] = self.word_vocab.to_dict() if self.word_vocab else None
        doc["char_vocab"] = self.char_vocab.to_dict() if self.char_vocab else None
        text = json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2)
        blob = text.encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(f"{len(blob)}\n".encode("ascii"))
            fh.write(blob)
            fh.write(bytes(payload))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise DataError(f"{path}: not a seqxfer checkpoint")
            length = int(fh.readline().strip())
            doc = json.loads(fh.read(length).decode("utf-8"))
            payload = fh.read()
        tensors = {}
        offset = 0
        for entry in doc["tensor_index"]:
            shape = tuple(entry["shape"])
            nbytes = int(np.prod(shape, dtype=np.int64)) * 8
            if offset + nbytes > len(payload):
                raise DataError(
                    f"{path}: tensor {entry['name']!r} declared shape {shape} "
                    "exceeds payload")
            arr = np.frombuffer(payload[offset:offset + nbytes], dtype="<f8")
            tensors[entry["name"]] = arr.reshape(shape).copy()
            offset += nbytes
        if offset != len(payload):
            raise DataError(f"{path}: {len(payload) - offset} trailing payload bytes")
        word_vocab = Vocabulary.from_dict(doc["word_vocab"]) if doc.get("word_vocab") else None
        char_vocab = Vocabulary.from_dict(doc["char_vocab"]) if doc.get("char_vocab") else None
        manifest = {k: v for k, v in doc.items()
                    if k not in ("tensor_index", "word_vocab", "char_vocab")}
        return cls(manifest, tensors, word_vocab, char_vocab)

    def digest(self, ignore_timestamp=True):
        """Content hash; manifest timestamp excluded by default."""
        doc = dict(self.manifest)
        if ignore_timestamp:
            doc.pop("created_at", None)
        h = hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8"))
        if self.word_vocab:
            h.update(json.dumps(self.word_vocab.to_dict()).encode("utf-8"))
        if self.char_vocab:
            h.update(json.dumps(self.char_vocab.to_dict()).encode("utf-8"))
        for name in sorted(self.tensors):
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(self.tensors[name], dtype="<f8").tobytes())
        return h.hexdigest()


def tensor_checksum(arr):
    return hashlib.sha256(np.ascontiguousarray(arr, dtype="<f8").tobytes()).hexdigest()
