import json

import pytest
from hypothesis import given, settings, strategies as st

from fakecti.corpus import (
    Article,
    Dataset,
    DuplicateId,
    EmptyText,
    InvalidSpec,
    MalformedLine,
    MODE_CAMPAIGN,
    MODE_STRATIFIED,
    SplitSpec,
    UNLABELED,
    dataset_stats,
    load_dataset,
    loads_dataset,
    serialize_dataset,
    stratified_split,
)


def make_dataset(campaign_sizes: dict[str, int]) -> Dataset:
    articles = []
    for campaign, size in campaign_sizes.items():
        for i in range(size):
            articles.append(Article(
                id=f"{campaign}-{i}",
                title=f"title {campaign} {i}",
                text=f"body text for {campaign} {i}",
                campaign=campaign,
            ))
    return Dataset(articles=tuple(articles))


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")


class TestLoadDataset:
    def test_three_lines_two_campaigns(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [
            {"id": "a1", "title": "t1", "text": "x", "campaign": "C1"},
            {"id": "a2", "title": "t2", "text": "y", "campaign": "C2"},
            {"id": "a3", "title": "t3", "text": "z", "campaign": "C1"},
        ])
        ds = load_dataset(p)
        assert len(ds) == 3
        assert ds.campaigns == {"C1", "C2"}

    def test_missing_text_names_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [
            {"id": "a1", "title": "t", "text": "x", "campaign": "C"},
            {"id": "a2", "title": "t", "campaign": "C"},
        ])
        with pytest.raises(MalformedLine) as exc:
            load_dataset(p)
        assert exc.value.lineno == 2

    def test_invalid_json_names_line(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"id": "a1", "title": "t", "text": "x"}\nnot json\n')
        with pytest.raises(MalformedLine) as exc:
            load_dataset(p)
        assert exc.value.lineno == 2

    def test_duplicate_id(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [
            {"id": "a1", "title": "t", "text": "x", "campaign": "C"},
            {"id": "a1", "title": "t", "text": "y", "campaign": "C"},
        ])
        with pytest.raises(DuplicateId):
            load_dataset(p)

    def test_empty_text(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [{"id": "a1", "title": "t", "text": "   ", "campaign": "C"}])
        with pytest.raises(EmptyText):
            load_dataset(p)

    def test_missing_id_derived_from_line_number(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [{"title": "t", "text": "x", "campaign": "C"}])
        ds = load_dataset(p)
        assert ds.articles[0].id == "row-1"

    def test_missing_campaign_becomes_unlabeled(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [{"id": "a1", "title": "t", "text": "x"}])
        ds = load_dataset(p)
        assert ds.articles[0].campaign == UNLABELED
        assert ds.campaigns == frozenset()

    def test_file_order_preserved(self, tmp_path):
        p = tmp_path / "d.jsonl"
        write_jsonl(p, [
            {"id": f"a{i}", "title": "t", "text": "x", "campaign": "C"} for i in range(5)
        ])
        ds = load_dataset(p)
        assert [a.id for a in ds.articles] == [f"a{i}" for i in range(5)]

    def test_round_trip(self):
        ds = make_dataset({"C1": 2, "C2": 3})
        assert loads_dataset(serialize_dataset(ds)) == ds

    def test_round_trip_with_optionals(self):
        ds = Dataset(articles=(
            Article(id="a", title="t", text="x", campaign="C",
                    link="https://www.example.com/p", threat_actor="Actor",
                    medium="Web"),
        ))
        assert loads_dataset(serialize_dataset(ds)) == ds


class TestSplit:
    def test_largest_remainder_two_campaigns(self):
        # 0.66 * 3 = 1.98 -> 1 + leftover; 0.34 * 3 = 1.02 -> 1.
        # Residue 0.98 beats 0.02, so train takes the leftover: 2/1 each.
        ds = make_dataset({"A": 3, "B": 3})
        spec = SplitSpec(fractions=(("train", 0.66), ("test", 0.34)), seed=1)
        result = stratified_split(ds, spec)
        for campaign in ("A", "B"):
            in_train = sum(1 for i in result.parts["train"] if i.startswith(campaign))
            in_test = sum(1 for i in result.parts["test"] if i.startswith(campaign))
            assert (in_train, in_test) == (2, 1)

    def test_deterministic(self):
        ds = make_dataset({"A": 10, "B": 7, "C": 3})
        spec = SplitSpec(fractions=(("train", 0.66), ("test", 0.34)), seed=99)
        assert stratified_split(ds, spec) == stratified_split(ds, spec)

    def test_seed_changes_assignment(self):
        ds = make_dataset({"A": 30})
        r1 = stratified_split(ds, SplitSpec(fractions=(("train", 0.66), ("test", 0.34)), seed=1))
        r2 = stratified_split(ds, SplitSpec(fractions=(("train", 0.66), ("test", 0.34)), seed=2))
        assert r1 != r2

    def test_campaign_partitioned_counts(self):
        # Largest remainder on 4 campaigns at 0.75/0.25: exactly 3 whole
        # campaigns in train, 1 in test.
        ds = make_dataset({"A": 5, "B": 2, "C": 7, "D": 1})
        spec = SplitSpec(fractions=(("train", 0.75), ("test", 0.25)), seed=3,
                         mode=MODE_CAMPAIGN)
        result = stratified_split(ds, spec)
        campaigns_of = lambda ids: {i.split("-")[0] for i in ids}
        train_c = campaigns_of(result.parts["train"])
        test_c = campaigns_of(result.parts["test"])
        assert len(train_c) == 3 and len(test_c) == 1
        assert not (train_c & test_c)

    def test_campaign_partitioned_keeps_campaigns_whole(self):
        ds = make_dataset({"A": 5, "B": 2, "C": 7, "D": 1, "E": 4})
        spec = SplitSpec(fractions=(("train", 0.8), ("test", 0.2)), seed=11,
                         mode=MODE_CAMPAIGN)
        result = stratified_split(ds, spec)
        for campaign, size in {"A": 5, "B": 2, "C": 7, "D": 1, "E": 4}.items():
            counts = [
                sum(1 for i in ids if i.startswith(campaign))
                for ids in result.parts.values()
            ]
            assert sorted(counts) == [0, size]

    def test_small_campaign_goes_to_largest_part(self):
        ds = make_dataset({"A": 9, "Tiny": 1})
        spec = SplitSpec(
            fractions=(("train", 0.5), ("val", 0.2), ("test", 0.3)), seed=5)
        result = stratified_split(ds, spec)
        assert "Tiny-0" in result.parts["train"]

    def test_invalid_fractions(self):
        with pytest.raises(InvalidSpec):
            SplitSpec(fractions=(("train", 0.5), ("test", 0.4)), seed=1)

    def test_single_part_rejected(self):
        with pytest.raises(InvalidSpec):
            SplitSpec(fractions=(("train", 1.0),), seed=1)

    def test_empty_dataset_rejected(self):
        spec = SplitSpec(fractions=(("train", 0.66), ("test", 0.34)), seed=1)
        with pytest.raises(InvalidSpec):
            stratified_split(Dataset(articles=()), spec)


@st.composite
def dataset_and_spec(draw):
    n_campaigns = draw(st.integers(min_value=1, max_value=5))
    sizes = {
        f"c{i}": draw(st.integers(min_value=1, max_value=12))
        for i in range(n_campaigns)
    }
    seed = draw(st.integers(min_value=0, max_value=2**32))
    frac = draw(st.floats(min_value=0.2, max_value=0.8))
    mode = draw(st.sampled_from([MODE_STRATIFIED, MODE_CAMPAIGN]))
    spec = SplitSpec(
        fractions=(("train", frac), ("test", 1.0 - frac)), seed=seed, mode=mode)
    return make_dataset(sizes), spec


class TestSplitProperties:
    @given(dataset_and_spec())
    @settings(max_examples=100)
    def test_parts_partition_the_id_set(self, case):
        ds, spec = case
        result = stratified_split(ds, spec)
        all_ids = [i for ids in result.parts.values() for i in ids]
        assert len(all_ids) == len(set(all_ids)) == len(ds)
        assert set(all_ids) == {a.id for a in ds.articles}

    @given(dataset_and_spec())
    @settings(max_examples=100)
    def test_stratified_within_one_of_quota(self, case):
        ds, spec = case
        if spec.mode != MODE_STRATIFIED:
            return
        result = stratified_split(ds, spec)
        sizes: dict[str, int] = {}
        for art in ds.articles:
            sizes[art.campaign] = sizes.get(art.campaign, 0) + 1
        for campaign, size in sizes.items():
            if size < len(spec.fractions):
                continue  # routed wholly to the largest part by design
            for (name, frac) in spec.fractions:
                count = sum(1 for i in result.parts[name] if i.startswith(campaign))
                assert abs(count - frac * size) <= 1

    @given(dataset_and_spec())
    @settings(max_examples=100)
    def test_campaign_partitioned_never_splits_a_campaign(self, case):
        ds, spec = case
        if spec.mode != MODE_CAMPAIGN:
            return
        result = stratified_split(ds, spec)
        for campaign in ds.campaigns:
            holders = [
                name for name, ids in result.parts.items()
                if any(i.startswith(campaign + "-") for i in ids)
            ]
            assert len(holders) == 1


class TestStats:
    def test_empty(self):
        stats = dataset_stats(Dataset(articles=()))
        assert (stats.n_samples, stats.n_campaigns, stats.n_threat_actors,
                stats.n_sources) == (0, 0, 0, 0)

    def test_direct_counts(self):
        ds = Dataset(articles=(
            Article(id="a1", title="t", text="x", campaign="C",
                    threat_actor="Actor A", link="https://www.foo.com/1"),
            Article(id="a2", title="t", text="y", campaign="C",
                    threat_actor="Actor B", link="http://bar.org/2"),
        ))
        stats = dataset_stats(ds)
        assert stats.n_samples == 2
        assert stats.n_campaigns == 1
        assert stats.n_threat_actors == 2
        assert stats.n_sources == 2

    def test_www_prefix_and_case_folded(self):
        ds = Dataset(articles=(
            Article(id="a1", title="t", text="x", campaign="C",
                    link="https://www.Foo.com/1"),
            Article(id="a2", title="t", text="y", campaign="C",
                    link="https://foo.com/other"),
        ))
        assert dataset_stats(ds).n_sources == 1

    def test_articles_without_links_contribute_no_source(self):
        ds = make_dataset({"C": 3})
        assert dataset_stats(ds).n_sources == 0
