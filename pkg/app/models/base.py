from typing import Optional, Tuple

import numpy as np

from app.core.exceptions import GridMismatchError
from app.models.grid import Grid


class GridFunction:
    """
    所有网格场的基类

    values 的最后 d 个轴是空间轴, 前面至多一个分量轴;
    spectrum 在首次访问时计算并缓存 (整块赋值, 重复计算结果相同)。
    """

    kind = "grid_function"

    def __init__(self, grid: Grid, values, spectrum: Optional[np.ndarray] = None):
        self.grid = grid
        self.values = np.asarray(values, dtype=np.complex128)
        self._check_layout()
        self._spectrum = None if spectrum is None else np.asarray(spectrum, dtype=np.complex128)

    def _check_layout(self):
        if self.values.shape[-self.grid.dim:] != self.grid.shape:
            raise GridMismatchError(
                f"{type(self).__name__} 形状 {self.values.shape} 与网格 {self.grid.shape} 不符"
            )

    @property
    def spatial_axes(self) -> Tuple[int, ...]:
        ndim = self.values.ndim
        return tuple(range(ndim - self.grid.dim, ndim))

    @property
    def spectrum(self) -> np.ndarray:
        """频率系数 f̂(k) = ⟨f, e^{ik·x}⟩ (归一化测度)"""
        if self._spectrum is None:
            self._spectrum = np.fft.fftn(self.values, axes=self.spatial_axes) / self.grid.size
        return self._spectrum

    @classmethod
    def from_spectrum(cls, grid: Grid, spectrum: np.ndarray):
        spectrum = np.asarray(spectrum, dtype=np.complex128)
        axes = tuple(range(spectrum.ndim - grid.dim, spectrum.ndim))
        values = np.fft.ifftn(spectrum, axes=axes) * grid.size
        return cls(grid, values, spectrum=spectrum)

    def same_layout(self, other: "GridFunction") -> None:
        if not isinstance(other, GridFunction) or other.kind != self.kind:
            raise GridMismatchError(f"种类不一致: {self.kind} vs {getattr(other, 'kind', type(other).__name__)}")
        if other.grid != self.grid:
            raise GridMismatchError(f"网格不一致: {self.grid} vs {other.grid}")
        if other.values.shape != self.values.shape:
            raise GridMismatchError(f"分量数不一致: {self.values.shape} vs {other.values.shape}")

    @property
    def max_imag(self) -> float:
        return float(np.max(np.abs(self.values.imag))) if self.values.size else 0.0

    @property
    def mean(self) -> np.ndarray:
        """零模态系数 (标量场为 0 维数组, 多分量场每分量一个)"""
        return np.mean(self.values, axis=self.spatial_axes)

    def _new(self, values):
        return type(self)(self.grid, values)

    def __add__(self, other: "GridFunction"):
        self.same_layout(other)
        return self._new(self.values + other.values)

    def __sub__(self, other: "GridFunction"):
        self.same_layout(other)
        return self._new(self.values - other.values)

    def __neg__(self):
        return self._new(-self.values)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return self._new(self.values * scalar)

    __rmul__ = __mul__

    def conj(self):
        return self._new(np.conj(self.values))

    def __repr__(self):
        return f"<{type(self).__name__}(dim={self.grid.dim}, n={self.grid.n}, shape={self.values.shape})>"
