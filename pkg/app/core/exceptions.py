"""
实验室异常层次

所有异常都继承 ValueError, 调用方按 ValueError 捕获即可,
分发层 (routers) 再把它们转换成失败记录和非零退出码。
"""
from typing import List, Optional


class LabError(ValueError):
    """实验室异常基类"""


class GridMismatchError(LabError):
    """两个场不在同一网格上, 或种类 / 分量数不一致"""


class ConstraintViolationError(LabError):
    """约束残差 (curl / div / 均值) 超过门限"""

    def __init__(self, message: str, residual: float, tolerance: float):
        super().__init__(f"{message}: residual={residual:.3e} > tol={tolerance:.1e}")
        self.residual = residual
        self.tolerance = tolerance


class BandLimitError(LabError):
    """截断带宽超出网格可表示范围"""


class FamilyError(LabError):
    """正交族构造失败 (重复模态、零模态、秩亏、超出子空间维数等)"""


class SpectralError(LabError):
    """奇异值分解等数值分解失败"""


class ConfigError(LabError):
    """运行配置校验失败, violations 收集全部违规项 (带键路径)"""

    def __init__(self, violations: List[str], source: Optional[str] = None):
        self.violations = list(violations)
        head = f"配置校验失败 ({source})" if source else "配置校验失败"
        super().__init__(head + ": " + "; ".join(self.violations))
