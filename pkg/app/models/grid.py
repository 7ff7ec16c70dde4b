"""
周期网格 (环面 [0,2π)^d, 归一化测度)

频率格点每个坐标取值 (−n/2, n/2], Nyquist 项记为 +n/2。
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Grid:
    """d 维环面上每轴 n 个点的均匀网格"""

    dim: int
    points_per_axis: int

    def __post_init__(self):
        if int(self.dim) < 2:
            raise ValueError(f"dim 必须 >= 2, 收到 {self.dim}")
        n = int(self.points_per_axis)
        if n < 4 or n % 2 != 0:
            raise ValueError(f"points_per_axis 必须是 >= 4 的偶数, 收到 {self.points_per_axis}")

    @property
    def n(self) -> int:
        return self.points_per_axis

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def nyquist(self) -> int:
        return self.points_per_axis // 2

    @cached_property
    def axis_frequencies(self) -> np.ndarray:
        n = self.points_per_axis
        freqs = np.fft.fftfreq(n, d=1.0 / n).round().astype(np.int64)
        freqs[freqs == -(n // 2)] = n // 2
        return _frozen(freqs)

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """形状 (d, n, ..., n) 的 k_j 数组 (浮点)"""
        axes = [self.axis_frequencies.astype(float)] * self.dim
        return _frozen(np.stack(np.meshgrid(*axes, indexing="ij")))

    @cached_property
    def k_squared(self) -> np.ndarray:
        return _frozen(np.sum(self.wavevectors ** 2, axis=0))

    @cached_property
    def k_norm(self) -> np.ndarray:
        return _frozen(np.sqrt(self.k_squared))

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        return _frozen(np.any(np.abs(self.wavevectors) == self.nyquist, axis=0))

    @cached_property
    def zero_mask(self) -> np.ndarray:
        return _frozen(self.k_squared == 0)

    @cached_property
    def points(self) -> np.ndarray:
        """形状 (d, n, ..., n) 的坐标 x_j = 2π i / n"""
        axis = 2.0 * np.pi * np.arange(self.points_per_axis) / self.points_per_axis
        return _frozen(np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij")))

    def band_mask(self, band: float) -> np.ndarray:
        """|k| <= band 且不在 Nyquist 行上 (含零模态)"""
        return (self.k_norm <= band + 1e-12) & ~self.nyquist_mask

    def contains(self, k: Sequence[int]) -> bool:
        """k 是否严格位于 Nyquist 以下"""
        return len(k) == self.dim and all(abs(int(kj)) < self.nyquist for kj in k)

    def index_of(self, k: Sequence[int]) -> Tuple[int, ...]:
        return tuple(int(kj) % self.points_per_axis for kj in k)

    def banded_lattice(self, band: float) -> np.ndarray:
        """
        0 < |k| <= band 的格点, 按 (|k|^2, 字典序) 排序

        Returns:
            形状 (count, d) 的整数数组
        """
        mask = self.band_mask(band) & ~self.zero_mask
        lattice = self.wavevectors[:, mask].T.round().astype(np.int64)
        order = np.lexsort(
            tuple(lattice[:, j] for j in reversed(range(self.dim))) + (np.sum(lattice ** 2, axis=1),)
        )
        return lattice[order]

    def plane_wave(self, k: Sequence[float]) -> np.ndarray:
        """e^{ik·x} 的网格值"""
        phase = np.tensordot(np.asarray(k, dtype=float), self.points, axes=(0, 0))
        return np.exp(1j * phase)
