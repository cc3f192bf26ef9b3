import zlib
from pathlib import Path
from typing import Union

CHUNK_SIZE = 1 << 20


def file_crc32(path: Union[str, Path]) -> str:
    """
    按块计算文件的CRC32（IEEE），返回 "0xXXXXXXXX"，写入manifest用于比对重放结果
    """
    crc = 0
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(CHUNK_SIZE), b''):
            crc = zlib.crc32(chunk, crc)
    return f"0x{crc & 0xFFFFFFFF:08X}"
