import json
import sys

# 为True时不输出步骤日志（错误信息仍然写到stderr）
_QUIET = False
# 为True时额外输出耗时等细节
_VERBOSE = False

def configure(quiet: bool = False, verbose: bool = False) -> None:
    global _QUIET, _VERBOSE
    _QUIET = quiet
    _VERBOSE = verbose and not quiet

def emit_step(step: str, status: str = "ok", **fields) -> dict:
    """
    输出一行JSON格式的步骤结果，便于脚本和IDE集成

    Args:
        step (str): 步骤名，例如 "ingest"、"coread"
        status (str): ok / warning / error
        **fields: 步骤相关的计数或说明

    Returns:
        dict: 输出的内容
    """
    result = {"step": step, "status": status}
    result.update(fields)
    if not _QUIET:
        print(json.dumps(result, ensure_ascii=False))
        sys.stdout.flush()
    return result

def emit_warning(step: str, message: str, **fields) -> dict:
    return emit_step(step, "warning", message=message, **fields)

def emit_detail(step: str, **fields) -> None:
    """
    仅在verbose模式下输出
    """
    if _VERBOSE:
        emit_step(step, "ok", **fields)
