"""
离散算子与 Clifford 代数

DenseOperator: Fourier 基下的稠密矩阵, 行列以带内 (零模态除外) 格点为指标,
奇异值首次访问时计算并缓存。
CliffordAlgebra: d 个两两反交换的 Hermite N×N 矩阵, N = 2^{⌊d/2⌋}。
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional

import numpy as np
from scipy import linalg

from app.core.exceptions import SpectralError
from app.models.grid import Grid


class DenseOperator:
    """
    Attributes:
        matrix: 复矩阵 (只读)
        grid: 所在网格 (抽象矩阵为 None)
        band: 指标集的带宽
        modes: 行 / 列指标对应的频率, 形状 (m, d)
        components: 每个频率上的分量数 (张量积后 > 1)
        truncation_error: u 截断到带内时的相对 L^2 误差
    """

    def __init__(self, matrix, grid: Optional[Grid] = None, band: Optional[float] = None,
                 modes: Optional[np.ndarray] = None, components: int = 1,
                 truncation_error: float = 0.0, label: str = ""):
        matrix = np.array(matrix, dtype=np.complex128)
        if matrix.ndim != 2:
            raise ValueError(f"算子矩阵必须是二维, 收到形状 {matrix.shape}")
        matrix.setflags(write=False)
        self.matrix = matrix
        self.grid = grid
        self.band = band
        self.modes = modes
        self.components = components
        self.truncation_error = truncation_error
        self.label = label

    @property
    def shape(self):
        return self.matrix.shape

    @cached_property
    def singular_values(self) -> np.ndarray:
        """全部奇异值, 非增排列, 个数 min(rows, cols)"""
        if 0 in self.matrix.shape:
            return np.zeros(0)
        try:
            values = linalg.svdvals(self.matrix, check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise SpectralError(f"{self.label or '算子'} 奇异值分解失败: {exc}") from exc
        values = np.sort(np.clip(values, 0.0, None))[::-1]
        values.setflags(write=False)
        return values

    def __matmul__(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ vector

    def __repr__(self):
        return f"<DenseOperator({self.label or 'matrix'}, shape={self.shape}, band={self.band})>"


@dataclass(frozen=True)
class CliffordAlgebra:
    dim: int
    gammas: np.ndarray

    @property
    def size(self) -> int:
        return self.gammas.shape[-1]

    def check(self) -> Dict[str, float]:
        """反交换关系与 Hermite 性的最大逐项误差"""
        eye = np.eye(self.size)
        anticommutation = 0.0
        hermiticity = 0.0
        for j, g in enumerate(self.gammas):
            hermiticity = max(hermiticity, float(np.max(np.abs(g - g.conj().T))))
            for k, h in enumerate(self.gammas):
                target = 2.0 * eye if j == k else 0.0 * eye
                anticommutation = max(anticommutation, float(np.max(np.abs(g @ h + h @ g - target))))
        return {"anticommutation": anticommutation, "hermiticity": hermiticity}
