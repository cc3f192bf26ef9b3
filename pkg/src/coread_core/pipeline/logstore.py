from collections import defaultdict
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, Iterator, Sequence, Union

from coread_core.domain.errors import LogFormatError
from coread_core.domain.models import (
    AccessEvent,
    DedupPeriod,
    JournalFilter,
    ParseResult,
    ReadProfile,
    month_key,
)
from coread_core.format.eventlog import is_skippable, parse_line
from coread_core.utils.report import emit_step

DEFAULT_MAX_MALFORMED = 0.1


def parse_events(stream: Union[str, Iterable[str]], max_malformed: float = DEFAULT_MAX_MALFORMED) -> ParseResult:
    """
    解析日志流，返回按文件顺序排列的事件

    坏行只计数不中断；坏行占记录行的比例超过max_malformed时抛出LogFormatError。

    Args:
        stream (str | Iterable[str]): 整段文本或按行迭代的文本流
        max_malformed (float): 允许的坏行比例

    Returns:
        ParseResult: 事件列表和坏行统计

    Raises:
        LogFormatError: 坏行比例超过阈值，指出第一条坏行的行号
    """
    lines = stream.splitlines() if isinstance(stream, str) else stream

    result = ParseResult()
    first_reason = None
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip('\n').rstrip('\r')
        if is_skippable(line):
            continue

        result.record_count += 1
        event, reason = parse_line(line)
        if event is None:
            result.malformed_count += 1
            if result.first_malformed_line is None:
                result.first_malformed_line = line_no
                first_reason = reason
            continue
        result.events.append(event)

    if result.record_count and result.malformed_count / result.record_count > max_malformed:
        raise LogFormatError(
            f"{result.malformed_count} of {result.record_count} lines are malformed "
            f"(limit {max_malformed:.0%}); first at line {result.first_malformed_line}: {first_reason}",
            result.first_malformed_line,
        )

    return result


def _decoded_lines(path: Union[str, Path], f: BinaryIO) -> Iterator[str]:
    for line_no, raw in enumerate(f, start=1):
        try:
            yield raw.decode('utf-8')
        except UnicodeDecodeError as e:
            raise LogFormatError(f"{path}:{line_no}: not valid UTF-8 ({e.reason})", line_no) from e


def read_event_logs(paths: Sequence[Union[str, Path]], max_malformed: float = DEFAULT_MAX_MALFORMED) -> ParseResult:
    """
    依次解析多个日志文件并按参数顺序拼接

    Args:
        paths (list): 日志文件路径
        max_malformed (float): 每个文件允许的坏行比例

    Returns:
        ParseResult: 合并后的结果

    Raises:
        LogFormatError: 坏行过多，或某行不是合法的UTF-8
    """
    merged = ParseResult()
    for path in paths:
        with open(path, 'rb') as f:
            part = parse_events(_decoded_lines(path, f), max_malformed)
        merged.events.extend(part.events)
        merged.record_count += part.record_count
        merged.malformed_count += part.malformed_count
        if merged.first_malformed_line is None:
            merged.first_malformed_line = part.first_malformed_line

    emit_step(
        "ingest",
        files=len(paths),
        records=merged.record_count,
        events=len(merged.events),
        malformed_lines=merged.malformed_count,
    )
    return merged


def dedup_reads(events: Iterable[AccessEvent], journal_filter: JournalFilter,
                period: DedupPeriod = DedupPeriod.MONTH) -> Dict[str, ReadProfile]:
    """
    把访问事件折叠成每个用户的ReadProfile

    同一用户、同一文章、同一周期内的多次访问算一次read；不在期刊过滤器中的事件被丢弃。
    FULL_RANGE下每篇文章的read记在最早一次访问所在的月份。

    Args:
        events (Iterable[AccessEvent]): 访问事件
        journal_filter (JournalFilter): 期刊过滤器
        period (DedupPeriod): 去重周期

    Returns:
        dict: cookie_id -> ReadProfile，按cookie_id排序；没有read的用户不出现
    """
    period = DedupPeriod(period)

    # cookie_id -> bibcode -> 该文章被访问过的月份集合
    seen = defaultdict(lambda: defaultdict(set))
    for event in events:
        if not journal_filter.accepts(event.bibcode):
            continue
        seen[event.cookie_id][event.bibcode].add(month_key(event.timestamp))

    profiles = {}
    for cookie_id in sorted(seen):
        monthly = defaultdict(int)
        for months in seen[cookie_id].values():
            if period == DedupPeriod.MONTH:
                for month in months:
                    monthly[month] += 1
            else:
                monthly[min(months)] += 1

        monthly_counts = dict(sorted(monthly.items()))
        profiles[cookie_id] = ReadProfile(
            cookie_id=cookie_id,
            papers=frozenset(seen[cookie_id]),
            monthly_counts=monthly_counts,
            total_reads=sum(monthly_counts.values()),
        )

    return profiles
