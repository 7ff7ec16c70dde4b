"""
正交归一族

成员按生成顺序排列, 前缀 (前 N 个成员) 在尺度实验中直接使用。
"""
from functools import cached_property
from typing import Iterator, List, Optional, Sequence

import numpy as np

from app.models.base import GridFunction
from app.models.grid import Grid
from app.schemas.family import FamilyDescriptor

# 以 Ḣ¹ 内积为正交归一标准的族类型
H1_KINDS = ("scalar_h1", "vector_h1")


def gram_matrix(grid: Grid, members: Sequence[GridFunction], inner: str = "l2") -> np.ndarray:
    """
    Gram 矩阵, 在频谱侧计算

    Args:
        inner: "l2" 或 "h1" (Ḣ¹ 内积 Σ |k|^2 f̂ conj(ĝ))
    """
    if not members:
        return np.zeros((0, 0), dtype=np.complex128)
    spectra = np.stack([f.spectrum.reshape(-1) for f in members])
    if inner == "h1":
        count = spectra.shape[1] // grid.size
        spectra = spectra * np.tile(grid.k_norm.reshape(-1), count)[None]
    return spectra @ spectra.conj().T


class OrthonormalFamily:
    """
    带 Gram 矩阵缓存的正交归一族

    Attributes:
        kind: curl_free / div_free / scalar_h1 / scalar_l2 / vector_h1
        members: 成员场列表
        descriptor: 生成描述
        modes: 每个成员对应的频率 (平面波族), 其余族为 None
    """

    def __init__(self, grid: Grid, kind: str, members: Sequence[GridFunction],
                 descriptor: FamilyDescriptor, modes: Optional[np.ndarray] = None):
        self.grid = grid
        self.kind = kind
        self.members: List[GridFunction] = list(members)
        self.descriptor = descriptor
        self.modes = modes

    @property
    def inner(self) -> str:
        return "h1" if self.kind in H1_KINDS else "l2"

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[GridFunction]:
        return iter(self.members)

    def __getitem__(self, index: int) -> GridFunction:
        return self.members[index]

    @cached_property
    def gram(self) -> np.ndarray:
        """按族自身的内积计算的 Gram 矩阵 G_{mn} = ⟨f_m, f_n⟩"""
        return gram_matrix(self.grid, self.members, self.inner)

    def prefix(self, count: int) -> "OrthonormalFamily":
        """前 count 个成员组成的子族"""
        params = dict(self.descriptor.params, prefix=count)
        modes = None if self.modes is None else self.modes[:count]
        return OrthonormalFamily(
            self.grid, self.kind, self.members[:count],
            self.descriptor.model_copy(update={"params": params}), modes,
        )

    def __repr__(self):
        return f"<OrthonormalFamily(kind={self.kind}, size={len(self)}, recipe={self.descriptor.recipe})>"
