from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from coread_core.domain.errors import ConfigError, DomainError

BIBCODE_LENGTH = 19
JOURNAL_TAG_LENGTH = 5

# ApJ（含Letters、Supplement）、AJ、A&A、MNRAS、PASP
DEFAULT_JOURNAL_TAGS = ("ApJ..", "ApJL.", "ApJS.", "AJ...", "A&A..", "MNRAS", "PASP.")


class DedupPeriod(str, Enum):
    """
    去重周期：同一用户在同一周期内多次访问同一篇文章只算一次read
    """
    MONTH = "MONTH"
    FULL_RANGE = "FULL_RANGE"


def bibcode_year(bibcode: str) -> int:
    return int(bibcode[:4])


def bibcode_journal(bibcode: str) -> str:
    return bibcode[4:9]


def month_key(timestamp: datetime) -> str:
    return f"{timestamp.year:04d}-{timestamp.month:02d}"


@dataclass(frozen=True)
class AccessEvent:
    """
    一条访问日志记录
    """
    timestamp: datetime
    cookie_id: str
    bibcode: str
    access_type: str

    @property
    def year(self) -> int:
        return bibcode_year(self.bibcode)

    @property
    def journal_tag(self) -> str:
        return bibcode_journal(self.bibcode)

    @property
    def month(self) -> str:
        return month_key(self.timestamp)


def pad_journal_tag(tag: str) -> str:
    """
    将期刊缩写右侧用'.'补齐到5个字符，例如 "AJ" -> "AJ..."
    """
    tag = tag.strip()
    if not tag or len(tag) > JOURNAL_TAG_LENGTH:
        raise ConfigError(f"invalid journal tag: {tag!r} (1-{JOURNAL_TAG_LENGTH} characters)")
    return tag.ljust(JOURNAL_TAG_LENGTH, '.')


@dataclass(frozen=True)
class JournalFilter:
    """
    核心期刊过滤器，匹配bibcode第5-9列
    """
    journal_tags: Tuple[str, ...] = DEFAULT_JOURNAL_TAGS

    def __post_init__(self):
        if not self.journal_tags:
            raise ConfigError("journal filter must not be empty")
        padded = []
        for tag in self.journal_tags:
            tag = pad_journal_tag(tag)
            if tag not in padded:
                padded.append(tag)
        object.__setattr__(self, 'journal_tags', tuple(padded))

    @classmethod
    def from_string(cls, value: str) -> "JournalFilter":
        """
        从逗号分隔的字符串构建，例如 "ApJ,AJ,MNRAS"
        """
        return cls(tuple(t for t in value.split(',') if t.strip()))

    def accepts(self, bibcode: str) -> bool:
        return bibcode_journal(bibcode) in self.journal_tags


@dataclass(frozen=True)
class ReadProfile:
    """
    单个用户去重后的阅读记录

    Attributes:
        cookie_id (str): 用户cookie ID
        papers (frozenset): 去重后读过的bibcode集合
        monthly_counts (dict): "YYYY-MM" -> 当月去重read数
        total_reads (int): monthly_counts之和
    """
    cookie_id: str
    papers: FrozenSet[str]
    monthly_counts: Mapping[str, int]
    total_reads: int

    @property
    def active_months(self) -> int:
        return sum(1 for count in self.monthly_counts.values() if count > 0)


@dataclass
class ParseResult:
    """
    日志解析结果
    """
    events: List[AccessEvent] = field(default_factory=list)
    malformed_count: int = 0
    record_count: int = 0
    first_malformed_line: Optional[int] = None

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


@dataclass(frozen=True)
class Sample:
    """
    按总read数排序后的样本用户

    Attributes:
        users (tuple): cookie_id列表，按total_reads降序、cookie_id升序
        index_of (dict): cookie_id -> 用户编号（1..Ns）
        profiles (dict): 样本用户的ReadProfile
        requested_size (int): 请求的Ns
    """
    users: Tuple[str, ...]
    index_of: Dict[str, int]
    profiles: Dict[str, ReadProfile]
    requested_size: int

    @property
    def size(self) -> int:
        return len(self.users)

    def profile_at(self, index: int) -> ReadProfile:
        """
        按用户编号（从1开始）取ReadProfile
        """
        if index < 1 or index > self.size:
            raise DomainError(f"user index out of range: {index} (1..{self.size})")
        return self.profiles[self.users[index - 1]]

    def ordered_profiles(self) -> Iterable[ReadProfile]:
        for cookie_id in self.users:
            yield self.profiles[cookie_id]
