import csv
import io
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from coread_core.domain.errors import ConfigError
from coread_core.utils.io import atomic_write, read_text


def format_value(value: Any) -> str:
    """
    CSV单元格格式化：浮点数用repr保证可完整还原，其余用str
    """
    if isinstance(value, float):
        return repr(float(value))
    if hasattr(value, 'item'):
        # numpy标量
        return format_value(value.item())
    if value is None:
        return ''
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    atomic_write(path, render_csv(header, rows))


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    text = read_text(path)
    return list(csv.DictReader(io.StringIO(text)))


def read_scaling_rows(path: Union[str, Path]) -> List[Tuple[int, float, Optional[float]]]:
    """
    读取sweep写出的scaling.csv

    Returns:
        list: (n_s, ε₁, R)，R列缺失或为空时为None

    Raises:
        ConfigError: 缺少n_s/epsilon1列，或取值无法解析
    """
    rows = read_csv(path)
    result = []
    for line_no, row in enumerate(rows, start=2):
        try:
            n_s = int(row['n_s'])
            eps1 = float(row['epsilon1'])
            raw_r = (row.get('R_stat') or '').strip()
            r_stat = float(raw_r) if raw_r else None
        except KeyError as e:
            raise ConfigError(f"{path}: missing column {e.args[0]!r}") from e
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{path}:{line_no}: {e}") from e
        result.append((n_s, eps1, r_stat))
    return result


def render_json(data: Any) -> str:
    return json.dumps(data, indent=2, ensure_ascii=False, sort_keys=False) + '\n'


def write_json(path: Union[str, Path], data: Any) -> None:
    atomic_write(path, render_json(data))


def read_citation_counts(path: Union[str, Path]) -> Dict[str, int]:
    """
    读取引用数表：每行 "bibcode<TAB>count"，'#'开头为注释

    Args:
        path (str): 文件路径

    Returns:
        dict: bibcode -> 引用数

    Raises:
        ConfigError: 行格式错误或引用数为负
    """
    counts = {}
    for line_no, line in enumerate(read_text(path).splitlines(), start=1):
        if not line.strip() or line.startswith('#'):
            continue
        parts = line.split('\t')
        if len(parts) != 2:
            raise ConfigError(f"{path}:{line_no}: expected 'bibcode<TAB>count'")
        bibcode, raw_count = parts[0].strip(), parts[1].strip()
        try:
            count = int(raw_count)
        except ValueError as e:
            raise ConfigError(f"{path}:{line_no}: citation count is not an integer: {raw_count!r}") from e
        if count < 0:
            raise ConfigError(f"{path}:{line_no}: citation count must be >= 0")
        counts[bibcode] = count
    return counts


def render_coread_triplets(triplets: Iterable[Tuple[int, int, int]]) -> str:
    """
    共读矩阵导出格式：每行 "k l r_kl"
    """
    return ''.join(f"{k} {l} {r}\n" for k, l, r in triplets)
