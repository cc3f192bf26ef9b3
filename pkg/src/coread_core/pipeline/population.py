from typing import Dict, Iterable, Mapping

from coread_core.config.run_spec import PopulationRule, RateBasis
from coread_core.domain.errors import DomainError, InsufficientDataError
from coread_core.domain.models import ReadProfile, Sample
from coread_core.utils.report import emit_step, emit_warning

MIN_SAMPLE_SIZE = 2


def _month_index(month: str) -> int:
    year, mon = month.split('-')
    return int(year) * 12 + int(mon) - 1


def interval_span(profiles: Iterable[ReadProfile]) -> int:
    """
    所有profile的monthly_counts键覆盖的月份跨度（含首尾），空输入返回0
    """
    indices = [_month_index(m) for p in profiles for m in p.monthly_counts]
    if not indices:
        return 0
    return max(indices) - min(indices) + 1


def monthly_rate(profile: ReadProfile, rule: PopulationRule) -> float:
    """
    按规则的口径计算用户的月阅读率

    全区间口径使用rule.interval_months；未设置时退化为该用户自身monthly_counts覆盖的跨度。

    Args:
        profile (ReadProfile): 用户阅读记录
        rule (PopulationRule): 人群规则

    Returns:
        float: 每月read数
    """
    if rule.rate_basis == RateBasis.MEAN_OVER_ACTIVE_MONTHS:
        active = profile.active_months
        return profile.total_reads / active if active else 0.0

    months = rule.interval_months or interval_span([profile])
    return profile.total_reads / months if months else 0.0


def filter_population(profiles: Mapping[str, ReadProfile], rule: PopulationRule) -> Dict[str, ReadProfile]:
    """
    保留月阅读率在[min_rate, max_rate]之间的用户

    Args:
        profiles (dict): cookie_id -> ReadProfile
        rule (PopulationRule): 人群规则

    Returns:
        dict: 过滤后的profiles，可能为空（此时输出警告）
    """
    kept = {}
    for cookie_id, profile in profiles.items():
        rate = monthly_rate(profile, rule)
        if rule.min_rate <= rate <= rule.max_rate:
            kept[cookie_id] = profile

    if not kept:
        emit_warning(
            "population",
            f"no user reads between {rule.min_rate:g} and {rule.max_rate:g} times per month",
            users_in=len(profiles),
        )
    else:
        emit_step("population", users_in=len(profiles), users_kept=len(kept), rate_basis=rule.rate_basis.value)
    return kept


def draw_sample(population: Mapping[str, ReadProfile], n_s: int) -> Sample:
    """
    按总read数降序取前n_s个用户，同分按cookie_id升序

    Args:
        population (dict): 过滤后的profiles
        n_s (int): 样本大小

    Returns:
        Sample: 样本，人群不足n_s时为全部人群

    Raises:
        DomainError: n_s < 2
        InsufficientDataError: 人群少于2人
    """
    if n_s < MIN_SAMPLE_SIZE:
        raise DomainError(f"n_s must be >= {MIN_SAMPLE_SIZE}, got {n_s}")
    if len(population) < MIN_SAMPLE_SIZE:
        raise InsufficientDataError(
            f"population has {len(population)} user(s); the spectral pipeline needs at least {MIN_SAMPLE_SIZE}"
        )

    ranked = sorted(population.values(), key=lambda p: (-p.total_reads, p.cookie_id))
    chosen = ranked[:n_s]

    users = tuple(p.cookie_id for p in chosen)
    return Sample(
        users=users,
        index_of={cookie_id: i for i, cookie_id in enumerate(users, start=1)},
        profiles={p.cookie_id: p for p in chosen},
        requested_size=n_s,
    )


def sample_rows(sample: Sample):
    """
    样本导出行：index, cookie_id, total_reads
    """
    for index, cookie_id in enumerate(sample.users, start=1):
        yield index, cookie_id, sample.profiles[cookie_id].total_reads
