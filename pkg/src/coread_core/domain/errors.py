class CoreadError(Exception):
    """
    所有流水线错误的基类
    """
    pass

class ConfigError(CoreadError):
    """
    配置错误异常（参数、配置文件或manifest内容非法）
    """
    pass

class LogFormatError(CoreadError):
    """
    日志格式错误：坏行比例超过阈值

    Attributes:
        line_no (int): 第一条坏行的行号（从1开始）
    """

    def __init__(self, message: str, line_no: int):
        super().__init__(message)
        self.line_no = line_no

class DomainError(CoreadError):
    """
    参数超出操作的定义域
    """
    pass

class InsufficientDataError(CoreadError):
    """
    数据量不足（用户数、拟合点数等）
    """
    pass

class UndefinedStatisticError(CoreadError):
    """
    统计量无定义（例如谱主体宽度为0）
    """
    pass

class InvariantError(CoreadError):
    """
    内部不变量被破坏，通常意味着上游有bug
    """
    pass

class EigenSolverError(CoreadError):
    """
    特征值求解失败

    Attributes:
        diagnostics (dict): 求解器诊断信息
    """

    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

class StageError(CoreadError):
    """
    某个流水线阶段失败，由api层包装
    """

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
