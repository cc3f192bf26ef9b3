import calendar
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from coread_core.config.run_spec import SynthConfig
from coread_core.domain.models import AccessEvent, DedupPeriod, JournalFilter, pad_journal_tag
from coread_core.format.eventlog import format_event
from coread_core.pipeline.logstore import dedup_reads, parse_events
from coread_core.utils.report import emit_step

ACCESS_TYPES = ("ABSTRACT", "FULLTEXT", "CITATIONS", "REFERENCES")
NOISE_READS = (1, 3)
FIRST_PAPER_YEAR = 1990
PAPER_YEAR_SPAN = 16
LOG_HEADER = "# timestamp\tcookie_id\tbibcode\taccess_type\n"


@dataclass
class SynthTruth:
    """
    生成时的真实读者记录（序列化之前）

    Attributes:
        papers (dict): cookie_id -> 读过的bibcode集合
        read_counts (dict): cookie_id -> 计划的read数
        regular_users (tuple): 常规用户（非一次性用户）
    """
    papers: Dict[str, FrozenSet[str]] = field(default_factory=dict)
    read_counts: Dict[str, int] = field(default_factory=dict)
    regular_users: Tuple[str, ...] = ()

    @property
    def noise_users(self) -> Tuple[str, ...]:
        regular = set(self.regular_users)
        return tuple(u for u in self.papers if u not in regular)

    def to_dict(self) -> dict:
        regular = set(self.regular_users)
        return {
            "users": {
                cookie_id: {
                    "reads": self.read_counts[cookie_id],
                    "regular": cookie_id in regular,
                    "papers": sorted(self.papers[cookie_id]),
                }
                for cookie_id in sorted(self.papers)
            }
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthTruth":
        users = data.get("users", {})
        return cls(
            papers={u: frozenset(v["papers"]) for u, v in users.items()},
            read_counts={u: int(v["reads"]) for u, v in users.items()},
            regular_users=tuple(u for u, v in users.items() if v.get("regular")),
        )


@dataclass
class RoundtripResult:
    """
    往返检查结果，可直接当bool使用
    """
    ok: bool
    diff: List[dict] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def make_bibcode(j: int, journal_tags: Tuple[str, ...]) -> str:
    """
    第j篇文章的19字符bibcode：年份(4) + 期刊(5) + 卷(4) + '.' + 页(4) + 首字母(1)
    """
    year = FIRST_PAPER_YEAR + j % PAPER_YEAR_SPAN
    journal = pad_journal_tag(journal_tags[j % len(journal_tags)])
    volume = str(j // 100 + 1).rjust(4, '.')
    page = str(j % 100 + 1).rjust(4, '.')
    initial = chr(ord('A') + j % 26)
    return f"{year:04d}{journal}{volume}.{page}{initial}"


class SynthGenerator:
    """
    基于优先连接的合成阅读日志生成器

    常规用户依次到达，每人抽取read数后逐篇选择文章，选中概率正比于
    (当前读者数 + 1)^attachment_bias，同一用户不重复选择。paper_growth为真时，
    文章按编号顺序随用户到达逐步进入可选池。
    """

    def __init__(self, config: SynthConfig):
        self.config = config.validate()
        self.rng = np.random.default_rng(self.config.seed)
        self.bibcodes = [make_bibcode(j, self.config.journal_tags) for j in range(self.config.n_papers)]
        self.popularity = np.zeros(self.config.n_papers, dtype=np.int64)
        self._month_starts = self._build_month_starts()

    def _build_month_starts(self) -> List[Tuple[datetime, int]]:
        starts = []
        year, month = self.config.start_year, 1
        for _ in range(self.config.months):
            days = calendar.monthrange(year, month)[1]
            starts.append((datetime(year, month, 1, tzinfo=timezone.utc), days * 86400))
            month += 1
            if month > 12:
                year, month = year + 1, 1
        return starts

    def _draw_read_count(self) -> int:
        cfg = self.config
        if cfg.reads_dispersion == 0:
            count = int(round(cfg.reads_mean))
        else:
            # gamma-Poisson混合：均值reads_mean，方差 mean + dispersion*mean^2
            shape = 1.0 / cfg.reads_dispersion
            lam = self.rng.gamma(shape, cfg.reads_mean / shape)
            count = int(self.rng.poisson(lam))
        return min(max(count, 1), cfg.reads_max)

    def _pool_size(self, user_index: int, reads: int) -> int:
        cfg = self.config
        if not cfg.paper_growth:
            return cfg.n_papers
        grown = -(-cfg.n_papers * (user_index + 1) // cfg.n_users)
        return min(cfg.n_papers, max(grown, reads))

    def _choose_papers(self, reads: int, pool: int) -> List[int]:
        weights = (self.popularity[:pool] + 1.0) ** self.config.attachment_bias
        chosen = []
        for _ in range(reads):
            cumulative = np.cumsum(weights)
            target = self.rng.random() * cumulative[-1]
            j = int(np.searchsorted(cumulative, target, side='right'))
            j = min(j, pool - 1)
            while weights[j] == 0:
                # 浮点边界落在已选文章上时向前找一个可选的
                j -= 1
            chosen.append(j)
            self.popularity[j] += 1
            weights[j] = 0.0
        return chosen

    def _timestamp(self) -> datetime:
        start, seconds = self._month_starts[int(self.rng.integers(len(self._month_starts)))]
        return start + timedelta(seconds=int(self.rng.integers(seconds)))

    def _events_for(self, cookie_id: str, papers: List[int]) -> List[AccessEvent]:
        events = []
        for j in papers:
            when = self._timestamp()
            access = ACCESS_TYPES[int(self.rng.integers(len(ACCESS_TYPES)))]
            events.append(AccessEvent(when, cookie_id, self.bibcodes[j], access))
            if self.rng.random() < self.config.repeat_prob:
                # 同一篇文章的再次访问，落在同一个月内
                month_end = datetime(when.year, when.month, calendar.monthrange(when.year, when.month)[1],
                                     23, 59, 59, tzinfo=timezone.utc)
                gap = int(self.rng.integers(int((month_end - when).total_seconds()) + 1))
                again = ACCESS_TYPES[int(self.rng.integers(len(ACCESS_TYPES)))]
                events.append(AccessEvent(when + timedelta(seconds=gap), cookie_id, self.bibcodes[j], again))
        return events

    def generate(self) -> Tuple[str, SynthTruth]:
        """
        生成日志文本和真实记录

        Returns:
            tuple: (日志文本, SynthTruth)
        """
        cfg = self.config
        truth = SynthTruth()
        events: List[AccessEvent] = []
        regular = []

        for i in range(cfg.n_users):
            cookie_id = f"u_{i:05d}"
            reads = self._draw_read_count()
            papers = self._choose_papers(reads, self._pool_size(i, reads))
            events.extend(self._events_for(cookie_id, papers))
            truth.papers[cookie_id] = frozenset(self.bibcodes[j] for j in papers)
            truth.read_counts[cookie_id] = reads
            regular.append(cookie_id)

        for i in range(cfg.noise_users):
            cookie_id = f"n_{i:05d}"
            reads = int(self.rng.integers(NOISE_READS[0], NOISE_READS[1] + 1))
            papers = [int(j) for j in self.rng.choice(cfg.n_papers, size=reads, replace=False)]
            events.extend(self._events_for(cookie_id, papers))
            truth.papers[cookie_id] = frozenset(self.bibcodes[j] for j in papers)
            truth.read_counts[cookie_id] = reads

        truth.regular_users = tuple(regular)
        events.sort(key=lambda e: (e.timestamp, e.cookie_id, e.bibcode, e.access_type))
        log_text = LOG_HEADER + ''.join(format_event(e) + '\n' for e in events)

        emit_step(
            "synth",
            users=cfg.n_users,
            noise_users=cfg.noise_users,
            papers=cfg.n_papers,
            events=len(events),
            seed=cfg.seed,
        )
        return log_text, truth


def generate(config: SynthConfig) -> Tuple[str, SynthTruth]:
    """
    按配置生成合成日志，相同配置和种子输出逐字节相同
    """
    return SynthGenerator(config).generate()


def compare_truth(log_text: str, truth: SynthTruth, journal_tags: Tuple[str, ...]) -> RoundtripResult:
    """
    解析日志并用FULL_RANGE去重，与真实记录逐用户比较
    """
    parsed = parse_events(log_text, max_malformed=0.0)
    profiles = dedup_reads(parsed.events, JournalFilter(journal_tags), DedupPeriod.FULL_RANGE)

    diff = []
    for cookie_id in sorted(set(profiles) | set(truth.papers)):
        expected = truth.papers.get(cookie_id, frozenset())
        actual = profiles[cookie_id].papers if cookie_id in profiles else frozenset()
        if expected != actual:
            diff.append({
                "cookie_id": cookie_id,
                "missing": sorted(expected - actual),
                "unexpected": sorted(actual - expected),
            })
    return RoundtripResult(ok=not diff, diff=diff)


def roundtrip_check(config: SynthConfig, log_text: Optional[str] = None) -> RoundtripResult:
    """
    generate -> parse_events -> dedup_reads(FULL_RANGE) 应当还原SynthTruth

    Args:
        config (SynthConfig): 生成配置
        log_text (str): 替换生成的日志文本（用于注入错误），省略时使用生成结果

    Returns:
        RoundtripResult: ok和逐用户差异
    """
    generated, truth = generate(config)
    result = compare_truth(generated if log_text is None else log_text, truth, config.journal_tags)
    emit_step("roundtrip", status="ok" if result.ok else "error", users=len(truth.papers), diff=len(result.diff))
    return result
