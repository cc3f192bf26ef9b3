import os
import tempfile
from pathlib import Path
from typing import Union


def atomic_write(path: Union[str, Path], data: Union[bytes, str]) -> None:
    """
    先写同目录下的临时文件再替换目标，str按UTF-8编码、LF换行写出

    目标目录不存在时自动创建。

    Args:
        path (str): 输出文件路径
        data (bytes | str): 要写入的数据
    """
    payload = data.encode('utf-8') if isinstance(data, str) else data
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, 'wb') as tmp:
            tmp.write(payload)
        os.replace(tmp_name, target)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def read_text(path: Union[str, Path]) -> str:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return f.read()
