"""Corpus ingestion and per-source lexical indexing.

Sources arrive as JSON arrays or CSV files, are normalized into
:class:`Document` records, and each source gets its own immutable BM25 index.
The :class:`SourceRegistry` keeps sources in registration order; that order is
the determinism anchor for retrieval fan-out, capping, and reporting.
"""

from __future__ import annotations

import csv
import json
import math
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

_DELETE_PUNCT = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase, delete punctuation characters, split on whitespace runs."""
    return text.lower().translate(_DELETE_PUNCT).split()


class CorpusError(ValueError):
    """Raised for unparseable corpus files, duplicate sources, and empty corpora."""


@dataclass(frozen=True)
class Document:
    id: str
    source: str
    text: str
    title: str | None = None


@dataclass(frozen=True)
class SourceProfile:
    name: str
    description: str
    document_count: int


def parse_documents(raw: str, format: str, source_name: str) -> list[Document]:
    """Parse corpus text in the declared format into validated documents.

    JSON: an array of objects with fields ``id`` (optional), ``title``
    (optional), and ``text`` (required). CSV: a header row with required
    column ``text``, optional ``id`` and ``title``. Missing ids are
    synthesized as ``<source_name>-<record_index>``.
    """
    if format == "json":
        records = _json_records(raw)
    elif format == "csv":
        records = _csv_records(raw)
    else:
        raise CorpusError(f"unsupported corpus format: {format!r}")

    documents: list[Document] = []
    seen_ids: set[str] = set()
    for index, record in records:
        text = record.get("text")
        if text is None:
            raise CorpusError(f"record {index}: missing required field 'text'")
        text = str(text).strip()
        if not text:
            raise CorpusError(f"record {index}: field 'text' is empty")
        doc_id = record.get("id")
        doc_id = str(doc_id).strip() if doc_id not in (None, "") else f"{source_name}-{index}"
        if doc_id in seen_ids:
            raise CorpusError(f"record {index}: duplicate document id {doc_id!r}")
        seen_ids.add(doc_id)
        title = record.get("title")
        title = str(title) if title not in (None, "") else None
        documents.append(Document(id=doc_id, source=source_name, text=text, title=title))

    if not documents:
        raise CorpusError("empty corpus")
    return documents


def _json_records(raw: str) -> list[tuple[int, dict]]:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"invalid JSON: {exc}")
    if not isinstance(data, list):
        raise CorpusError("JSON corpus must be an array of objects")
    records = []
    for index, item in enumerate(data):
        if not isinstance(item, dict):
            raise CorpusError(f"record {index}: expected an object, got {type(item).__name__}")
        records.append((index, item))
    return records


def _csv_records(raw: str) -> list[tuple[int, dict]]:
    reader = csv.DictReader(raw.splitlines())
    if reader.fieldnames is None:
        raise CorpusError("empty corpus")
    fields = [name.strip() for name in reader.fieldnames]
    if "text" not in fields:
        raise CorpusError("CSV corpus is missing required column 'text'")
    records = []
    for index, row in enumerate(reader):
        records.append((index, {k.strip(): v for k, v in row.items() if k is not None}))
    return records


def load_documents(path: str | Path, format: str, source_name: str) -> list[Document]:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    return parse_documents(path.read_text(encoding="utf-8"), format, source_name)


class Bm25Index:
    """Immutable BM25 inverted index over one source's documents.

    Okapi weighting with k1=1.2, b=0.75 and the non-negative
    ``ln(1 + (N - df + 0.5) / (df + 0.5))`` idf, so documents sharing no term
    with the query score exactly 0. Lookups rank by descending score with ties
    broken by ascending document id; zero-score documents are still ranked so
    a lookup can always fill ``k`` slots from a source of >= k documents.
    """

    def __init__(self, documents: list[Document], k1: float = 1.2, b: float = 0.75) -> None:
        if not documents:
            raise CorpusError("cannot index an empty document list")
        self.documents = list(documents)
        self.k1 = k1
        self.b = b

        self._doc_terms = [Counter(tokenize(doc.text)) for doc in self.documents]
        self._doc_lens = [sum(tf.values()) for tf in self._doc_terms]
        self._avgdl = sum(self._doc_lens) / len(self.documents) or 1.0

        postings: dict[str, list[tuple[int, int]]] = {}
        for pos, terms in enumerate(self._doc_terms):
            for term, freq in terms.items():
                postings.setdefault(term, []).append((pos, freq))
        self._postings = postings
        n = len(self.documents)
        self._idf = {
            term: math.log(1.0 + (n - len(plist) + 0.5) / (len(plist) + 0.5))
            for term, plist in postings.items()
        }

    def lookup(self, query: str, k: int) -> list[tuple[Document, float]]:
        """Top-k documents by BM25 score; ties broken by ascending id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        scores = [0.0] * len(self.documents)
        for term in tokenize(query):
            plist = self._postings.get(term)
            if not plist:
                continue
            idf = self._idf[term]
            for pos, freq in plist:
                denom = freq + self.k1 * (
                    1.0 - self.b + self.b * self._doc_lens[pos] / self._avgdl
                )
                scores[pos] += idf * freq * (self.k1 + 1.0) / denom
        order = sorted(
            range(len(self.documents)),
            key=lambda pos: (-scores[pos], self.documents[pos].id),
        )
        return [(self.documents[pos], scores[pos]) for pos in order[:k]]


def build_index(documents: list[Document]) -> Bm25Index:
    return Bm25Index(documents)


@dataclass(frozen=True)
class RegistryEntry:
    profile: SourceProfile
    index: Bm25Index


class SourceRegistry:
    """Ordered mapping of source name -> (profile, index).

    Registration order is fixed and identical across retrieval, capping, and
    reporting. Entries are immutable once registered; re-ingesting under the
    same name is an error.
    """

    def __init__(self) -> None:
        self._entries: dict[str, RegistryEntry] = {}

    def register(self, name: str, profile_text: str, documents: list[Document]) -> SourceProfile:
        if not name or not name.strip():
            raise CorpusError("source name must be non-empty")
        if name in self._entries:
            raise CorpusError(f"duplicate source: {name!r}")
        index = build_index(documents)
        profile = SourceProfile(
            name=name, description=profile_text, document_count=len(documents)
        )
        self._entries[name] = RegistryEntry(profile=profile, index=index)
        return profile

    def names(self) -> list[str]:
        return list(self._entries)

    def profiles(self) -> list[SourceProfile]:
        return [entry.profile for entry in self._entries.values()]

    def index_for(self, name: str) -> Bm25Index:
        if name not in self._entries:
            raise CorpusError(f"unknown source: {name!r}")
        return self._entries[name].index

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def subset(self, names: list[str]) -> "SourceRegistry":
        """New registry with the named entries, preserving this registry's order."""
        missing = [name for name in names if name not in self._entries]
        if missing:
            raise CorpusError(f"unknown source: {missing[0]!r}")
        sub = SourceRegistry()
        for name in self.names():
            if name in names:
                sub._entries[name] = self._entries[name]
        return sub


def ingest_corpus(
    registry: SourceRegistry,
    path: str | Path,
    format: str,
    source_name: str,
    profile_text: str,
) -> SourceProfile:
    """Parse a corpus file, index it, and add the source to the registry."""
    if source_name in registry:
        raise CorpusError(f"duplicate source: {source_name!r}")
    documents = load_documents(path, format, source_name)
    return registry.register(source_name, profile_text, documents)


# --- workspace persistence (rebuild-from-corpus; no index serialization) ---

def save_source(data_dir: str | Path, name: str, profile_text: str, documents: list[Document]) -> Path:
    """Store a normalized corpus under the workspace so later runs can reload it."""
    source_dir = Path(data_dir) / "sources" / name
    source_dir.mkdir(parents=True, exist_ok=True)
    meta = {"name": name, "profile": profile_text, "document_count": len(documents)}
    (source_dir / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2), encoding="utf-8"
    )
    with (source_dir / "docs.jsonl").open("w", encoding="utf-8") as handle:
        for doc in documents:
            record = {"id": doc.id, "text": doc.text}
            if doc.title is not None:
                record["title"] = doc.title
            handle.write(json.dumps(record, sort_keys=True) + "\n")
    return source_dir


def load_workspace_sources(data_dir: str | Path, registry: SourceRegistry) -> list[SourceProfile]:
    """Register every stored source (alphabetical order) into the registry.

    Names already registered are skipped, so restoring a workspace on top of
    preloaded presets is idempotent.
    """
    sources_dir = Path(data_dir) / "sources"
    profiles = []
    if not sources_dir.is_dir():
        return profiles
    for source_dir in sorted(sources_dir.iterdir()):
        meta_path = source_dir / "meta.json"
        docs_path = source_dir / "docs.jsonl"
        if not meta_path.is_file() or not docs_path.is_file():
            continue
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        name = meta["name"]
        if name in registry:
            continue
        documents = []
        with docs_path.open(encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                record = json.loads(line)
                documents.append(
                    Document(
                        id=record["id"],
                        source=name,
                        text=record["text"],
                        title=record.get("title"),
                    )
                )
        profiles.append(registry.register(name, meta.get("profile", ""), documents))
    return profiles


# --- bundled presets ---

def preset_dir() -> Path:
    return Path(__file__).parent / "presets"


def list_presets() -> list[dict]:
    manifests = []
    for path in sorted(preset_dir().glob("*.json")):
        manifest = json.loads(path.read_text(encoding="utf-8"))
        # The directory also holds non-manifest json (the demo stub script).
        if not isinstance(manifest, dict) or "sources" not in manifest or "dataset" not in manifest:
            continue
        manifest["_path"] = str(path)
        manifests.append(manifest)
    return manifests


def load_preset(name_or_path: str | Path, registry: SourceRegistry) -> Path:
    """Register a preset's sources; returns the path of its query dataset.

    ``name_or_path`` is either a bundled preset name (e.g. ``3source``) or a
    path to a manifest file with the same schema:
    ``{"name", "description", "sources": [{"name", "profile", "file",
    "format"}], "dataset": <relative path>}``.
    """
    manifest_path = Path(name_or_path)
    if not manifest_path.is_file():
        manifest_path = preset_dir() / f"{name_or_path}.json"
    if not manifest_path.is_file():
        raise CorpusError(f"unknown preset: {name_or_path!r}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    base = manifest_path.parent
    for source in manifest["sources"]:
        ingest_corpus(
            registry,
            base / source["file"],
            source.get("format", "json"),
            source["name"],
            source["profile"],
        )
    return base / manifest["dataset"]
