import re
from datetime import datetime, timezone
from typing import Optional, Tuple

from coread_core.domain.models import BIBCODE_LENGTH, AccessEvent

# 每行4个字段，以TAB分隔：时间戳、cookie_id、bibcode、访问类型
FIELD_COUNT = 4
TIMESTAMP_FORMAT = '%Y-%m-%dT%H:%M:%SZ'
COMMENT_PREFIX = '#'
MIN_YEAR = 1800
MAX_YEAR = 2100

_ACCESS_TYPE_RE = re.compile(r'^[A-Z][A-Z0-9_]*$')


def parse_line(line: str) -> Tuple[Optional[AccessEvent], Optional[str]]:
    """
    解析一行日志

    Args:
        line (str): 去掉换行符的一行

    Returns:
        tuple: (AccessEvent, None) 或 (None, 错误原因)
    """
    parts = line.split('\t')
    if len(parts) != FIELD_COUNT:
        return None, f"expected {FIELD_COUNT} tab-separated fields, got {len(parts)}"

    raw_ts, cookie_id, bibcode, access_type = parts

    try:
        timestamp = datetime.strptime(raw_ts, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)
    except ValueError:
        return None, f"bad timestamp: {raw_ts!r}"

    if not cookie_id or any(ch.isspace() for ch in cookie_id):
        return None, "cookie_id must be non-empty and contain no whitespace"

    if len(bibcode) != BIBCODE_LENGTH:
        return None, f"bibcode must be {BIBCODE_LENGTH} characters, got {len(bibcode)}"

    year = bibcode[:4]
    if not year.isdigit() or not MIN_YEAR <= int(year) <= MAX_YEAR:
        return None, f"bibcode year out of range: {year!r}"

    if not _ACCESS_TYPE_RE.match(access_type):
        return None, f"bad access type: {access_type!r}"

    return AccessEvent(timestamp, cookie_id, bibcode, access_type), None


def format_event(event: AccessEvent) -> str:
    """
    序列化为一行日志（不含换行符）
    """
    return '\t'.join((
        event.timestamp.astimezone(timezone.utc).strftime(TIMESTAMP_FORMAT),
        event.cookie_id,
        event.bibcode,
        event.access_type,
    ))


def is_skippable(line: str) -> bool:
    """
    注释行和空行不计入记录数
    """
    return not line or line.startswith(COMMENT_PREFIX)
