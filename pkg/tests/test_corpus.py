import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import oracle_bm25_ranking, oracle_tokenize
from ragmux.corpus import (
    CorpusError,
    Document,
    SourceRegistry,
    build_index,
    ingest_corpus,
    list_presets,
    load_documents,
    load_preset,
    load_workspace_sources,
    parse_documents,
    save_source,
    tokenize,
)


def docs_from(texts, source="s"):
    return [Document(id=f"{source}-{i}", source=source, text=t) for i, t in enumerate(texts)]


class TestTokenize:
    def test_lowercases_and_strips_punctuation(self):
        assert tokenize("The Eiffel Tower, in Paris!") == ["the", "eiffel", "tower", "in", "paris"]

    def test_empty_and_punctuation_only(self):
        assert tokenize("") == []
        assert tokenize("?!...") == []

    def test_apostrophes_deleted_not_split(self):
        # "don't" must become "dont", not "don t"
        assert tokenize("don't stop") == ["dont", "stop"]

    @given(st.text(max_size=200))
    def test_matches_character_filter_oracle(self, text):
        assert tokenize(text) == oracle_tokenize(text)


class TestParseDocuments:
    def test_json_list(self):
        raw = json.dumps(
            [
                {"id": "a", "text": "alpha", "title": "A"},
                {"id": "b", "text": "beta"},
            ]
        )
        docs = parse_documents(raw, "json", "lib")
        assert [d.id for d in docs] == ["a", "b"]
        assert docs[0].title == "A"
        assert docs[1].title is None
        assert all(d.source == "lib" for d in docs)

    def test_csv(self):
        raw = "id,text,title\nr1,hello world,Hi\nr2,more text,\n"
        docs = parse_documents(raw, "csv", "lib")
        assert [d.id for d in docs] == ["r1", "r2"]
        assert docs[0].title == "Hi"
        assert docs[1].title is None

    def test_missing_id_is_synthesized_from_position(self):
        raw = json.dumps([{"text": "alpha"}, {"text": "beta"}])
        docs = parse_documents(raw, "json", "lib")
        assert [d.id for d in docs] == ["lib-0", "lib-1"]

    def test_missing_text_names_the_record(self):
        raw = json.dumps([{"id": "a", "text": "ok"}, {"id": "b"}])
        with pytest.raises(CorpusError, match="record 1: missing required field 'text'"):
            parse_documents(raw, "json", "lib")

    def test_empty_text_names_the_record(self):
        raw = json.dumps([{"id": "a", "text": "  "}])
        with pytest.raises(CorpusError, match="record 0: field 'text' is empty"):
            parse_documents(raw, "json", "lib")

    def test_duplicate_ids_rejected(self):
        raw = json.dumps([{"id": "a", "text": "x"}, {"id": "a", "text": "y"}])
        with pytest.raises(CorpusError, match="duplicate document id"):
            parse_documents(raw, "json", "lib")

    def test_empty_corpus_rejected(self):
        with pytest.raises(CorpusError, match="empty corpus"):
            parse_documents("[]", "json", "lib")

    def test_csv_without_text_column(self):
        with pytest.raises(CorpusError, match="missing required column 'text'"):
            parse_documents("id,body\n1,hello\n", "csv", "lib")

    def test_invalid_json(self):
        with pytest.raises(CorpusError, match="invalid JSON"):
            parse_documents("{nope", "json", "lib")

    def test_json_must_be_an_array(self):
        with pytest.raises(CorpusError, match="array"):
            parse_documents('{"id": "a", "text": "x"}', "json", "lib")

    def test_unknown_format(self):
        with pytest.raises(CorpusError, match="unsupported corpus format"):
            parse_documents("x", "xml", "lib")


class TestBm25Index:
    def test_single_document_scores_by_formula(self):
        docs = docs_from(["the cat sat"])
        index = build_index(docs)
        results = index.lookup("cat", 1)
        assert len(results) == 1
        doc, score = results[0]
        assert doc.id == "s-0"
        # N=1, df=1: idf = ln(1 + 0.5/1.5); tf=1, |d|=avgdl so length norm cancels
        expected = math.log(1 + 0.5 / 1.5) * (1 * 2.2) / (1 + 1.2)
        assert score == pytest.approx(expected, rel=1e-12)

    def test_topical_match_outranks_off_topic(self):
        docs = docs_from(["cats purr when content", "dogs bark at strangers"])
        index = build_index(docs)
        results = index.lookup("why do cats purr", 2)
        assert results[0][0].id == "s-0"
        assert results[0][1] > results[1][1]

    def test_zero_score_documents_still_returned(self):
        docs = docs_from(["alpha beta", "gamma delta"])
        index = build_index(docs)
        results = index.lookup("alpha", 2)
        assert len(results) == 2
        assert results[1][1] == 0.0

    def test_ties_break_by_ascending_id(self):
        docs = [
            Document(id="zz", source="s", text="same words here"),
            Document(id="aa", source="s", text="same words here"),
        ]
        index = build_index(docs)
        results = index.lookup("same words", 2)
        assert [doc.id for doc, _ in results] == ["aa", "zz"]

    def test_k_larger_than_corpus(self):
        docs = docs_from(["one", "two"])
        assert len(build_index(docs).lookup("one", 50)) == 2

    def test_k_below_one_rejected(self):
        index = build_index(docs_from(["one"]))
        with pytest.raises(ValueError):
            index.lookup("one", 0)

    def test_empty_document_list_rejected(self):
        with pytest.raises(CorpusError):
            build_index([])

    def test_matches_bruteforce_oracle_on_fixture(self):
        texts = [
            "the tower stands in paris near the river",
            "paris is the capital of france",
            "the great wall stretches across northern china",
            "rivers in france include the seine and the loire",
            "china and france signed a trade accord",
        ]
        docs = docs_from(texts)
        index = build_index(docs)
        for query in ("paris france", "the river in china", "trade accord", "seine"):
            expected = oracle_bm25_ranking(docs, query)
            got = index.lookup(query, len(docs))
            assert [doc.id for doc, _ in got] == [doc_id for doc_id, _ in expected]
            for (_, got_score), (_, want_score) in zip(got, expected):
                assert got_score == pytest.approx(want_score, rel=1e-9, abs=1e-12)

    def test_rebuild_is_deterministic(self):
        docs = docs_from(["alpha beta gamma", "beta gamma delta", "delta alpha"])
        first = build_index(docs).lookup("alpha delta", 3)
        second = build_index(docs).lookup("alpha delta", 3)
        assert [(d.id, s) for d, s in first] == [(d.id, s) for d, s in second]

    words = st.sampled_from(["alpha", "beta", "gamma", "delta", "epsilon", "zeta"])

    @settings(max_examples=60, deadline=None)
    @given(
        texts=st.lists(
            st.lists(words, min_size=1, max_size=8).map(" ".join), min_size=1, max_size=8
        ),
        query=st.lists(words, min_size=1, max_size=3).map(" ".join),
        k=st.integers(min_value=1, max_value=8),
    )
    def test_lookup_is_prefix_of_full_oracle_ordering(self, texts, query, k):
        docs = docs_from(texts)
        expected = oracle_bm25_ranking(docs, query)
        got = build_index(docs).lookup(query, k)
        assert [doc.id for doc, _ in got] == [doc_id for doc_id, _ in expected[:k]]

    def test_every_document_retrievable_by_own_text(self):
        texts = [
            "quartz clocks keep steady time",
            "glaciers carve deep valleys",
            "honey never spoils in sealed jars",
        ]
        docs = docs_from(texts)
        index = build_index(docs)
        for doc in docs:
            results = index.lookup(doc.text, len(docs))
            ids = [d.id for d, score in results if score > 0]
            assert doc.id in ids


class TestSourceRegistry:
    def test_register_preserves_order(self):
        registry = SourceRegistry()
        for name in ("wiki", "sciq", "bioasq"):
            registry.register(name, f"about {name}", docs_from(["text"], source=name))
        assert registry.names() == ["wiki", "sciq", "bioasq"]
        assert [p.name for p in registry.profiles()] == ["wiki", "sciq", "bioasq"]

    def test_profiles_carry_counts_and_descriptions(self):
        registry = SourceRegistry()
        registry.register("wiki", "general articles", docs_from(["a", "b"], source="wiki"))
        profile = registry.profiles()[0]
        assert profile.description == "general articles"
        assert profile.document_count == 2
        assert "wiki" in registry and len(registry) == 1

    def test_duplicate_and_empty_names_rejected(self):
        registry = SourceRegistry()
        registry.register("wiki", "d", docs_from(["a"], source="wiki"))
        with pytest.raises(CorpusError, match="duplicate source"):
            registry.register("wiki", "d", docs_from(["b"], source="wiki"))
        with pytest.raises(CorpusError, match="non-empty"):
            registry.register("  ", "d", docs_from(["c"], source="x"))

    def test_index_for_unknown_source(self):
        with pytest.raises(CorpusError, match="unknown source: 'ghost'"):
            SourceRegistry().index_for("ghost")

    def test_subset_preserves_registry_order(self):
        registry = SourceRegistry()
        for name in ("a", "b", "c"):
            registry.register(name, name, docs_from(["t"], source=name))
        sub = registry.subset(["c", "a"])
        assert sub.names() == ["a", "c"]

    def test_subset_unknown_source_named(self):
        registry = SourceRegistry()
        registry.register("a", "a", docs_from(["t"], source="a"))
        with pytest.raises(CorpusError, match="unknown source: 'ghost'"):
            registry.subset(["a", "ghost"])


class TestIngestAndWorkspace:
    def test_ingest_corpus_from_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps([{"id": "a", "text": "alpha"}, {"id": "b", "text": "beta"}]))
        registry = SourceRegistry()
        profile = ingest_corpus(registry, path, "json", "lib", "test docs")
        assert profile.document_count == 2
        assert registry.names() == ["lib"]

    def test_ingest_duplicate_source_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps([{"id": "a", "text": "alpha"}]))
        registry = SourceRegistry()
        ingest_corpus(registry, path, "json", "lib", "d")
        with pytest.raises(CorpusError, match="duplicate source"):
            ingest_corpus(registry, path, "json", "lib", "d")

    def test_load_documents_missing_file(self, tmp_path):
        with pytest.raises(CorpusError, match="corpus file not found"):
            load_documents(tmp_path / "nope.json", "json", "lib")

    def test_save_and_reload_round_trip(self, tmp_path):
        docs = [
            Document(id="lib-0", source="lib", text="alpha beta", title="First"),
            Document(id="lib-1", source="lib", text="gamma"),
        ]
        save_source(tmp_path, "lib", "test docs", docs)

        restored = SourceRegistry()
        load_workspace_sources(tmp_path, restored)
        assert restored.names() == ["lib"]
        profile = restored.profiles()[0]
        assert profile.description == "test docs"
        assert profile.document_count == 2
        hits = restored.index_for("lib").lookup("alpha", 1)
        assert hits[0][0].id == "lib-0"
        assert hits[0][0].title == "First"

    def test_load_workspace_skips_already_registered(self, tmp_path):
        docs = docs_from(["alpha"], source="lib")
        save_source(tmp_path, "lib", "one", docs)
        registry = SourceRegistry()
        registry.register("lib", "already here", docs)
        load_workspace_sources(tmp_path, registry)
        assert registry.profiles()[0].description == "already here"

    def test_load_workspace_missing_dir_is_noop(self, tmp_path):
        registry = SourceRegistry()
        assert load_workspace_sources(tmp_path / "absent", registry) == []
        assert registry.names() == []

    def test_load_workspace_alphabetical_order(self, tmp_path):
        for name in ("zeta", "alpha", "mid"):
            save_source(tmp_path, name, name, docs_from(["text"], source=name))
        registry = SourceRegistry()
        load_workspace_sources(tmp_path, registry)
        assert registry.names() == ["alpha", "mid", "zeta"]


class TestPresets:
    def test_bundled_presets_listed(self):
        names = [p["name"] for p in list_presets()]
        # exactly the bundled manifests; stray json in the directory must not leak in
        assert names == ["2source", "3source", "4source"]

    def test_load_preset_registers_sources(self):
        registry = SourceRegistry()
        dataset = load_preset("2source", registry)
        assert registry.names() == ["local", "global"]
        assert dataset.exists()
        assert all(p.document_count > 0 for p in registry.profiles())

    def test_load_preset_by_manifest_path(self, tmp_path):
        corpus = tmp_path / "c.json"
        corpus.write_text(json.dumps([{"id": "a", "text": "alpha"}]))
        dataset = tmp_path / "qs.jsonl"
        dataset.write_text('{"id": "q0", "question": "x?", "answers": ["alpha"]}\n')
        manifest = tmp_path / "mini.json"
        manifest.write_text(
            json.dumps(
                {
                    "name": "mini",
                    "description": "one source",
                    "sources": [
                        {"name": "lib", "profile": "docs", "file": "c.json", "format": "json"}
                    ],
                    "dataset": "qs.jsonl",
                }
            )
        )
        registry = SourceRegistry()
        got = load_preset(manifest, registry)
        assert got == dataset
        assert registry.names() == ["lib"]

    def test_load_preset_unknown(self):
        with pytest.raises(CorpusError, match="unknown preset"):
            load_preset("9source", SourceRegistry())
