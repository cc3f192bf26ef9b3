import json
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, Tuple

from coread_core.config.run_spec import MatrixKind, RateBasis, RunConfig, SynthConfig
from coread_core.domain.errors import ConfigError
from coread_core.domain.models import DedupPeriod, JournalFilter

MANIFEST_FORMAT = 'COREAD_RUN'
MANIFEST_VERSION = 1


def _read_json(path: str) -> Dict[str, Any]:
    file_path = Path(path)
    if not file_path.exists():
        raise ConfigError(f"File not found: {path}")
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return data


def _check_keys(data: Dict[str, Any], cls, prefix: str) -> None:
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{prefix}.{key} is not a recognised option")


def load_journal_tags(value: str) -> Tuple[str, ...]:
    """
    解析逗号分隔的期刊缩写列表，返回补齐后的tag元组
    """
    return JournalFilter.from_string(value).journal_tags


def synth_config_from_dict(data: Dict[str, Any]) -> SynthConfig:
    """
    从dict创建SynthConfig并校验

    Raises:
        ConfigError: 存在未知字段或取值非法
    """
    _check_keys(data, SynthConfig, 'synth')
    values = dict(data)
    if 'journal_tags' in values:
        values['journal_tags'] = tuple(values['journal_tags'])
    return SynthConfig(**values).validate()


def load_synth_config(path: str) -> SynthConfig:
    """
    读取合成日志的JSON配置文件

    Args:
        path (str): 配置文件路径

    Returns:
        SynthConfig: 校验后的配置
    """
    return synth_config_from_dict(_read_json(path))


def run_config_from_dict(data: Dict[str, Any]) -> RunConfig:
    _check_keys(data, RunConfig, 'params')
    values = dict(data)
    try:
        if 'journal_tags' in values:
            values['journal_tags'] = JournalFilter(tuple(values['journal_tags'])).journal_tags
        if 'period' in values:
            values['period'] = DedupPeriod(values['period'])
        if 'rate_basis' in values:
            values['rate_basis'] = RateBasis(values['rate_basis'])
        if 'matrix' in values:
            values['matrix'] = MatrixKind(values['matrix'])
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return RunConfig(**values)


def _next_to(value: str, manifest_path: str) -> str:
    # 相对路径按manifest所在目录解析，绝对路径原样保留
    candidate = Path(value)
    if candidate.is_absolute():
        return str(candidate)
    return str((Path(manifest_path).parent / candidate).resolve())


def load_manifest(path: str) -> Tuple[str, Any]:
    """
    读取一次运行的manifest.json

    Args:
        path (str): manifest.json路径

    Returns:
        tuple: (command, 配置对象)。synth返回SynthConfig，其余返回RunConfig，
               其中的相对路径已按manifest所在目录解析

    Raises:
        ConfigError: 格式或版本不符
    """
    data = _read_json(path)

    if data.get('format') != MANIFEST_FORMAT:
        raise ConfigError(f'format must be {MANIFEST_FORMAT}')

    if data.get('manifest_version') != MANIFEST_VERSION:
        raise ConfigError(f'manifest_version must be {MANIFEST_VERSION}')

    command = data.get('command')
    params = data.get('params')
    if command not in ('synth', 'analyze', 'sweep', 'probe'):
        raise ConfigError(f"unknown command in manifest: {command!r}")
    if not isinstance(params, dict):
        raise ConfigError("params missing")

    if command == 'synth':
        return command, synth_config_from_dict(params)

    run = run_config_from_dict(params)
    run.logs = [_next_to(p, path) for p in run.logs]
    if run.run_dir:
        run.run_dir = _next_to(run.run_dir, path)
    if run.citations:
        run.citations = _next_to(run.citations, path)
    if run.from_scaling:
        run.from_scaling = _next_to(run.from_scaling, path)
    return command, run
