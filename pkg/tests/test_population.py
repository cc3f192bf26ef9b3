import pytest

from coread_core.config.run_spec import PopulationRule, RateBasis
from coread_core.domain.errors import ConfigError, DomainError, InsufficientDataError
from coread_core.domain.models import ReadProfile
from coread_core.pipeline.population import (
    draw_sample,
    filter_population,
    interval_span,
    monthly_rate,
    sample_rows,
)
from coread_core.utils.report import configure


def profile(cookie_id, monthly_counts, papers=None):
    total = sum(monthly_counts.values())
    if papers is None:
        papers = frozenset(f"{cookie_id}-{i}" for i in range(total))
    return ReadProfile(cookie_id, frozenset(papers), dict(monthly_counts), total)


def year_of(count):
    return {f"2005-{m:02d}": count for m in range(1, 13)}


def test_active_month_rate_keeps_busy_month():
    rule = PopulationRule()
    p = profile("u1", {"2005-01": 50})
    assert monthly_rate(p, rule) == 50
    assert list(filter_population({"u1": p}, rule)) == ["u1"]


def test_low_steady_reader_is_excluded():
    rule = PopulationRule()
    p = profile("u1", year_of(5))
    assert filter_population({"u1": p}, rule) == {}


def test_burst_reader_depends_on_rate_basis():
    counts = {"2005-01": 120}
    counts.update({f"2005-{m:02d}": 0 for m in range(2, 13)})
    p = profile("u1", counts)

    active = PopulationRule(rate_basis=RateBasis.MEAN_OVER_ACTIVE_MONTHS)
    full = PopulationRule(rate_basis=RateBasis.MEAN_OVER_FULL_INTERVAL)
    fixed = PopulationRule(rate_basis=RateBasis.MEAN_OVER_FULL_INTERVAL, interval_months=12)

    assert monthly_rate(p, active) == 120
    assert monthly_rate(p, full) == 10
    assert filter_population({"u1": p}, active) == {}
    assert list(filter_population({"u1": p}, full)) == ["u1"]
    assert list(filter_population({"u1": p}, fixed)) == ["u1"]


def test_rate_bounds_are_inclusive():
    rule = PopulationRule(min_rate=10, max_rate=100)
    profiles = {
        "lo": profile("lo", {"2005-01": 10}),
        "hi": profile("hi", {"2005-01": 100}),
        "over": profile("over", {"2005-01": 101}),
    }
    assert set(filter_population(profiles, rule)) == {"lo", "hi"}


def test_filter_is_idempotent():
    rule = PopulationRule(rate_basis=RateBasis.MEAN_OVER_FULL_INTERVAL)
    profiles = {
        "a": profile("a", {"2005-01": 30, "2005-03": 0}),
        "b": profile("b", {"2005-01": 9}),
        "c": profile("c", {"2005-02": 15, "2005-03": 15}),
    }
    once = filter_population(profiles, rule)
    assert filter_population(once, rule) == once


def test_empty_population_emits_warning(capsys):
    configure()
    filter_population({"u1": profile("u1", {"2005-01": 1})}, PopulationRule())
    out = capsys.readouterr().out
    assert '"status": "warning"' in out


def test_interval_span_covers_all_months():
    profiles = [profile("a", {"2004-11": 3}), profile("b", {"2005-02": 4})]
    assert interval_span(profiles) == 4
    assert interval_span([]) == 0


def test_population_rule_rejects_bad_bounds():
    with pytest.raises(ConfigError):
        PopulationRule(min_rate=50, max_rate=10)
    with pytest.raises(ConfigError):
        PopulationRule(min_rate=0)
    with pytest.raises(ConfigError):
        PopulationRule(interval_months=0)


class TestDrawSample:
    def setup_method(self):
        self.population = {
            "u1": profile("u1", {"2005-01": 30}),
            "u3": profile("u3", {"2005-01": 20}),
            "u2": profile("u2", {"2005-01": 20}),
            "u4": profile("u4", {"2005-01": 10}),
            "u5": profile("u5", {"2005-01": 5}),
        }

    def test_top_readers_with_cookie_tie_break(self):
        sample = draw_sample(self.population, 3)
        assert sample.users == ("u1", "u2", "u3")
        assert sample.index_of == {"u1": 1, "u2": 2, "u3": 3}
        assert sample.requested_size == 3

    def test_saturates_at_population_size(self):
        sample = draw_sample(self.population, 10)
        assert sample.size == 5
        assert sample.requested_size == 10

    def test_all_ties_pick_lexicographically_smallest(self):
        population = {c: profile(c, {"2005-01": 12}) for c in ("d", "b", "c", "a")}
        assert draw_sample(population, 2).users == ("a", "b")

    def test_samples_are_nested(self):
        small = draw_sample(self.population, 2)
        large = draw_sample(self.population, 4)
        assert large.users[:2] == small.users

    def test_deterministic(self):
        assert draw_sample(self.population, 4) == draw_sample(dict(reversed(list(self.population.items()))), 4)

    def test_profile_at_is_one_based(self):
        sample = draw_sample(self.population, 3)
        assert sample.profile_at(1).cookie_id == "u1"
        with pytest.raises(DomainError):
            sample.profile_at(0)

    def test_sample_rows(self):
        rows = list(sample_rows(draw_sample(self.population, 2)))
        assert rows == [(1, "u1", 30), (2, "u2", 20)]

    def test_rejects_tiny_sample_size(self):
        with pytest.raises(DomainError):
            draw_sample(self.population, 1)

    def test_rejects_tiny_population(self):
        with pytest.raises(InsufficientDataError):
            draw_sample({"u1": self.population["u1"]}, 5)
