import json
import random
from datetime import timedelta

import pytest

from issuetriage.corpus import (
    Corpus,
    CorpusError,
    FilterConfig,
    IssueRecord,
    filter_corpus,
    load_corpus,
    save_corpus,
    stratified_split,
)
from conftest import T0, make_issue


def corpus_of(*issues):
    return Corpus(issues=tuple(issues), provenance={"source": "test"})


class TestRoundTrip:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        corpus, report = load_corpus(path)
        assert len(corpus) == 0
        assert report.ok

    def test_save_load_identity(self, tmp_path):
        original = corpus_of(
            make_issue(id="a", labels=("bug", "ui"), n_comments=2, n_events=3,
                       followers=7, closer="bob", milestone_present=True),
            make_issue(id="b", title="Add dark mode", closed_days=None,
                       is_pull_request=True, extra={"custom_key": [1, 2]}),
        )
        path = tmp_path / "c.jsonl"
        save_corpus(original, path)
        loaded, report = load_corpus(path)
        assert report.ok
        assert loaded == original

    def test_unknown_keys_preserved(self, tmp_path):
        path = tmp_path / "c.jsonl"
        save_corpus(corpus_of(make_issue(extra={"reactions": 5})), path)
        raw = json.loads(path.read_text().splitlines()[0])
        assert raw["reactions"] == 5
        loaded, _ = load_corpus(path)
        assert loaded.issues[0].extra == {"reactions": 5}

    def test_malformed_lines_reported_with_numbers(self, tmp_path):
        path = tmp_path / "c.jsonl"
        save_corpus(corpus_of(make_issue(id="a"), make_issue(id="b"),
                              make_issue(id="c")), path)
        lines = path.read_text().splitlines()
        lines.insert(2, "{not json")
        path.write_text("\n".join(lines) + "\n")
        corpus, report = load_corpus(path)
        assert len(corpus) == 3
        assert len(report.errors) == 1
        assert report.errors[0][0] == 3

    def test_strict_raises_on_malformed(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("{broken\n")
        with pytest.raises(CorpusError):
            load_corpus(path, strict=True)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CorpusError):
            load_corpus(tmp_path / "nope.jsonl")

    def test_schema_version_mismatch(self, tmp_path):
        path = tmp_path / "c.jsonl"
        save_corpus(corpus_of(make_issue()), path)
        meta = path.with_name(path.name + ".meta.json")
        meta.write_text(json.dumps({"schema_version": 99}))
        with pytest.raises(CorpusError, match="schema version"):
            load_corpus(path)


class TestInvariants:
    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError, match="duplicate labels"):
            make_issue(labels=("Bug", "bug"))

    def test_created_after_closed_rejected(self):
        with pytest.raises(ValueError, match="created_at"):
            make_issue(closed_days=-5)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            corpus_of(make_issue(id="x"), make_issue(id="x"))


class TestFilter:
    def test_short_title_removed(self):
        c = corpus_of(make_issue(id="short", title="ok"), make_issue(id="fine"))
        kept, report = filter_corpus(c)
        assert [i.id for i in kept.issues] == ["fine"]
        assert report.removed_short_text == 1

    def test_duplicate_label_removed(self):
        c = corpus_of(make_issue(labels=("duplicate",)))
        kept, report = filter_corpus(c)
        assert len(kept) == 0
        assert report.removed_excluded_label == 1

    def test_cluster_level_exclusion(self, maps):
        c = corpus_of(make_issue(id="d", labels=("t-duplicate",)),
                      make_issue(id="n", labels=("not an issue",)),
                      make_issue(id="k", labels=("bug",)))
        kept, report = filter_corpus(c, cluster_of=maps.clusters.cluster_of)
        assert [i.id for i in kept.issues] == ["k"]
        assert report.removed_excluded_label == 2

    def test_non_english_removed(self):
        c = corpus_of(make_issue(description="синтаксическая ошибка при разборе"))
        kept, report = filter_corpus(c)
        assert len(kept) == 0
        assert report.removed_non_english == 1

    def test_idempotent(self, planted_corpus, maps):
        once, report1 = filter_corpus(planted_corpus, cluster_of=maps.clusters.cluster_of)
        twice, report2 = filter_corpus(once, cluster_of=maps.clusters.cluster_of)
        assert twice == once
        assert report2.total_removed == 0


class TestStratifiedSplit:
    def priority(self, issue):
        return issue.labels[0]

    def balanced_corpus(self, n_hp, n_lp):
        issues = [make_issue(id=f"h{i}", labels=("hp",)) for i in range(n_hp)]
        issues += [make_issue(id=f"l{i}", labels=("lp",)) for i in range(n_lp)]
        return Corpus(issues=tuple(issues))

    def test_exact_divisibility(self):
        train, test = stratified_split(self.balanced_corpus(50, 50),
                                       self.priority, 0.8, seed=1)
        counts = {}
        for issue in train.issues:
            counts[issue.labels[0]] = counts.get(issue.labels[0], 0) + 1
        assert counts == {"hp": 40, "lp": 40}
        assert len(test) == 20

    def test_small_corpus_within_one(self):
        train, _ = stratified_split(self.balanced_corpus(7, 3), self.priority,
                                    0.8, seed=3)
        n_hp = sum(1 for i in train.issues if i.labels[0] == "hp")
        n_lp = sum(1 for i in train.issues if i.labels[0] == "lp")
        assert abs(n_hp - 5.6) <= 1
        assert abs(n_lp - 2.4) <= 1

    def test_determinism(self):
        c = self.balanced_corpus(13, 9)
        a = stratified_split(c, self.priority, 0.7, seed=42)
        b = stratified_split(c, self.priority, 0.7, seed=42)
        assert a == b

    def test_partition_properties_random(self):
        rng = random.Random(7)
        for trial in range(100):
            n_hp, n_lp = rng.randint(2, 30), rng.randint(2, 30)
            ratio = rng.uniform(0.1, 0.9)
            c = self.balanced_corpus(n_hp, n_lp)
            train, test = stratified_split(c, self.priority, ratio, seed=trial)
            train_ids = {i.id for i in train.issues}
            test_ids = {i.id for i in test.issues}
            assert not train_ids & test_ids
            assert train_ids | test_ids == {i.id for i in c.issues}
            for cls, total in (("hp", n_hp), ("lp", n_lp)):
                got = sum(1 for i in train.issues if i.labels[0] == cls)
                assert abs(got - total * ratio) <= 1

    def test_singleton_class_goes_to_larger_part(self):
        c = Corpus(issues=tuple(
            [make_issue(id="only", labels=("rare",))]
            + [make_issue(id=f"c{i}", labels=("common",)) for i in range(10)]))
        train, test = stratified_split(c, self.priority, 0.8, seed=0)
        assert any(i.id == "only" for i in train.issues)
        train2, test2 = stratified_split(c, self.priority, 0.2, seed=0)
        assert any(i.id == "only" for i in test2.issues)

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            stratified_split(self.balanced_corpus(2, 2), self.priority, 1.0, 0)

    def test_missing_target_label(self):
        c = corpus_of(make_issue(labels=()))
        with pytest.raises(ValueError, match="no target"):
            stratified_split(c, lambda i: i.labels[0] if i.labels else None, 0.5, 0)
