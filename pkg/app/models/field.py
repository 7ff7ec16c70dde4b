"""
标量场 / 向量场 / 二形式场

- ScalarField: 每个网格点一个复数
- VectorField: 分量轴在最前; 一般为 d 个分量, 多分量 (C^M) 场也用它承载
- TwoFormField: d(d−1)/2 个分量, 按 (j, k), j<k 的字典序排列
"""
from itertools import combinations
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.core.exceptions import GridMismatchError
from app.models.base import GridFunction
from app.models.grid import Grid


class ScalarField(GridFunction):
    kind = "scalar"

    def _check_layout(self):
        if self.values.shape != self.grid.shape:
            raise GridMismatchError(f"ScalarField 形状 {self.values.shape} 与网格 {self.grid.shape} 不符")

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def constant(cls, grid: Grid, value: complex) -> "ScalarField":
        return cls(grid, np.full(grid.shape, value, dtype=np.complex128))

    @classmethod
    def plane_wave(cls, grid: Grid, k: Sequence[float], amplitude: complex = 1.0) -> "ScalarField":
        return cls(grid, amplitude * grid.plane_wave(k))

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            self.same_layout(other)
            return ScalarField(self.grid, self.values * other.values)
        return super().__mul__(other)


class VectorField(GridFunction):
    kind = "vector"

    def _check_layout(self):
        if self.values.ndim != self.grid.dim + 1 or self.values.shape[1:] != self.grid.shape:
            raise GridMismatchError(f"VectorField 形状 {self.values.shape} 与网格 {self.grid.shape} 不符")
        if self.values.shape[0] < 1:
            raise GridMismatchError("VectorField 至少需要一个分量")

    @property
    def count(self) -> int:
        return self.values.shape[0]

    def component(self, j: int) -> ScalarField:
        return ScalarField(self.grid, self.values[j])

    @property
    def components(self) -> List[ScalarField]:
        return [self.component(j) for j in range(self.count)]

    @classmethod
    def from_components(cls, components: Sequence[ScalarField]) -> "VectorField":
        grid = components[0].grid
        for comp in components:
            if comp.grid != grid:
                raise GridMismatchError("分量不在同一网格上")
        return cls(grid, np.stack([comp.values for comp in components]))

    @classmethod
    def zeros(cls, grid: Grid, count: int = None) -> "VectorField":
        count = grid.dim if count is None else count
        return cls(grid, np.zeros((count,) + grid.shape, dtype=np.complex128))

    @classmethod
    def constant(cls, grid: Grid, vector: Sequence[complex]) -> "VectorField":
        vector = np.asarray(vector, dtype=np.complex128)
        return cls(grid, vector.reshape((-1,) + (1,) * grid.dim) * np.ones(grid.shape))

    def scale_by(self, scalar: ScalarField) -> "VectorField":
        """逐点乘以标量场"""
        if scalar.grid != self.grid:
            raise GridMismatchError("标量场与向量场不在同一网格上")
        return VectorField(self.grid, self.values * scalar.values[None])


def form_pairs(dim: int) -> List[Tuple[int, int]]:
    return list(combinations(range(dim), 2))


class TwoFormField(GridFunction):
    kind = "two_form"

    def _check_layout(self):
        expected = self.grid.dim * (self.grid.dim - 1) // 2
        if self.values.shape != (expected,) + self.grid.shape:
            raise GridMismatchError(
                f"TwoFormField 需要 {expected} 个分量, 形状 {self.values.shape} 不符"
            )

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return form_pairs(self.grid.dim)

    def pair_index(self, j: int, k: int) -> int:
        return self.pairs.index((j, k))

    def component(self, j: int, k: int) -> ScalarField:
        """α^{(j,k)}; j>k 时按反对称取负"""
        if j == k:
            return ScalarField.zeros(self.grid)
        if j > k:
            return -self.component(k, j)
        return ScalarField(self.grid, self.values[self.pair_index(j, k)])

    @property
    def components(self) -> Dict[Tuple[int, int], ScalarField]:
        return {pair: ScalarField(self.grid, self.values[i]) for i, pair in enumerate(self.pairs)}

    @classmethod
    def zeros(cls, grid: Grid) -> "TwoFormField":
        count = grid.dim * (grid.dim - 1) // 2
        return cls(grid, np.zeros((count,) + grid.shape, dtype=np.complex128))
