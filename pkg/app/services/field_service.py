# services/field_service.py
"""
网格场服务 - 频谱变换、Fourier 乘子、内积与序列化

约定:
- 环面测度归一化 (总质量 1), e^{ik·x} 构成正交归一基
- 正变换系数 f̂(k) = mean(f · e^{−ik·x}), 逆变换精确还原网格值
- 所有场以复数存储, 实值性是不变量而非类型
"""
import logging
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from app.core.exceptions import GridMismatchError
from app.models.base import GridFunction
from app.models.field import ScalarField, TwoFormField, VectorField
from app.models.grid import Grid

logger = logging.getLogger(__name__)

Multiplier = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]

_KINDS = {"scalar": ScalarField, "vector": VectorField, "two_form": TwoFormField}


class FieldService:
    """
    网格场基础运算
    其余服务 (微积分、范数、谱算子) 都建立在这里的变换和乘子之上
    """

    @staticmethod
    def to_spectrum(f: GridFunction) -> np.ndarray:
        """正变换: 返回频率系数数组 (与 values 同形)"""
        return f.spectrum

    @staticmethod
    def from_spectrum(grid: Grid, spectrum: np.ndarray, kind: str = "scalar") -> GridFunction:
        """逆变换: 由频率系数构造指定种类的场"""
        return _KINDS[kind].from_spectrum(grid, spectrum)

    @staticmethod
    def multiplier_values(grid: Grid, m: Multiplier) -> np.ndarray:
        """在整个格点上求乘子的值, 并拒绝非有限值"""
        values = m(grid.wavevectors) if callable(m) else m
        values = np.broadcast_to(np.asarray(values, dtype=np.complex128), grid.shape)
        if not np.all(np.isfinite(values)):
            bad = int(np.count_nonzero(~np.isfinite(values)))
            raise ValueError(f"乘子在 {bad} 个格点上不是有限值 (零模态的值需要显式给出)")
        return values

    @staticmethod
    def apply_multiplier(f: GridFunction, m: Multiplier) -> GridFunction:
        """
        应用 Fourier 乘子: 输出频谱 = m(k) · f̂(k)

        Args:
            f: 任意网格场, 多分量场逐分量作用
            m: 以波矢数组 (d, n, ..., n) 为输入的可调用对象, 或直接给出的乘子数组

        Returns:
            与 f 同种类的新场
        """
        values = FieldService.multiplier_values(f.grid, m)
        return type(f).from_spectrum(f.grid, values * f.spectrum)

    @staticmethod
    def inner_product(f: GridFunction, g: GridFunction) -> complex:
        """⟨f, g⟩ = 归一化求积 ∫ f · conj(g), 多分量场对分量求和"""
        f.same_layout(g)
        return complex(np.sum(f.values * np.conj(g.values)) / f.grid.size)

    @staticmethod
    def spectral_inner_product(f: GridFunction, g: GridFunction) -> complex:
        """Parseval 一侧: Σ_k f̂(k) conj(ĝ(k))"""
        f.same_layout(g)
        return complex(np.sum(f.spectrum * np.conj(g.spectrum)))

    @staticmethod
    def norm(f: GridFunction) -> float:
        return float(np.sqrt(np.sum(np.abs(f.values) ** 2) / f.grid.size))

    @staticmethod
    def pointwise_dot_sum(e_list: Sequence[VectorField], b_list: Sequence[VectorField]) -> ScalarField:
        """
        Σ_n E_n(x) · B_n(x), 分量乘积求和, 不取共轭

        Args:
            e_list: 向量场列表
            b_list: 等长向量场列表

        Returns:
            标量场
        """
        if len(e_list) != len(b_list):
            raise GridMismatchError(f"列表长度不一致: {len(e_list)} vs {len(b_list)}")
        if not e_list:
            raise GridMismatchError("列表为空, 无法确定网格")
        grid = e_list[0].grid
        total = np.zeros(grid.shape, dtype=np.complex128)
        for e_field, b_field in zip(e_list, b_list):
            e_field.same_layout(b_field)
            if e_field.grid != grid:
                raise GridMismatchError("列表中的场不在同一网格上")
            total += np.sum(e_field.values * b_field.values, axis=0)
        return ScalarField(grid, total)

    @staticmethod
    def pointwise_magnitude_squared(f: GridFunction) -> ScalarField:
        """|f(x)|^2, 多分量场取欧氏模"""
        values = np.abs(f.values) ** 2
        if f.values.ndim > f.grid.dim:
            values = np.sum(values, axis=0)
        return ScalarField(f.grid, values)

    @staticmethod
    def remove_mean(f: GridFunction) -> GridFunction:
        """去掉零模态 (同调空间按常数取商)"""
        spectrum = f.spectrum.copy()
        spectrum[(Ellipsis,) + (0,) * f.grid.dim] = 0.0
        return type(f).from_spectrum(f.grid, spectrum)

    @staticmethod
    def band_limit(f: GridFunction, band: float) -> GridFunction:
        """保留 |k| <= band 且非 Nyquist 的系数"""
        mask = f.grid.band_mask(band)
        return type(f).from_spectrum(f.grid, f.spectrum * mask)

    @staticmethod
    def random_real(grid: Grid, rng: np.random.Generator, band: float, components: int = 0) -> GridFunction:
        """
        |k| <= band 内的随机实值场 (白噪声低通, 去掉 Nyquist 行)

        Args:
            components: 0 表示标量场, 否则为向量场分量数
        """
        shape = grid.shape if components == 0 else (components,) + grid.shape
        noise = rng.standard_normal(shape)
        cls = ScalarField if components == 0 else VectorField
        field = FieldService.band_limit(cls(grid, noise), band)
        # 低通掩码对 k -> −k 对称, 结果仍为实值, 去掉舍入虚部
        return cls(grid, field.values.real)

    # ------------------------------------------------------------------
    # 序列化
    # ------------------------------------------------------------------
    # 格式 (npz, 版本 1):
    #   header  int64[4] = (format_version, d, n, component_count)
    #   kind    str      = scalar | vector | two_form
    #   values  complex128, 形状 (component_count, n, ..., n), 行主序
    # 标量场的 component_count 为 1。

    FORMAT_VERSION = 1

    @staticmethod
    def dump(f: GridFunction, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        values = f.values.reshape((-1,) + f.grid.shape)
        header = np.array([FieldService.FORMAT_VERSION, f.grid.dim, f.grid.n, values.shape[0]], dtype=np.int64)
        with open(path, "wb") as handle:
            np.savez(handle, header=header, kind=np.array(f.kind), values=np.ascontiguousarray(values))
        logger.debug(f"[FieldService] 场已写入 {path}")
        return path

    @staticmethod
    def load(path: Union[str, Path]) -> GridFunction:
        with np.load(Path(path), allow_pickle=False) as data:
            version, dim, n, count = (int(v) for v in data["header"])
            if version != FieldService.FORMAT_VERSION:
                raise ValueError(f"不支持的场文件版本: {version}")
            kind = str(data["kind"])
            values = np.array(data["values"])
        grid = Grid(dim, n)
        if values.shape != (count,) + grid.shape:
            raise ValueError(f"场文件形状 {values.shape} 与头部 (d={dim}, n={n}, c={count}) 不符")
        if kind == "scalar":
            return ScalarField(grid, values[0])
        return _KINDS[kind](grid, values)

    @staticmethod
    def stack_values(fields: Sequence[GridFunction]) -> np.ndarray:
        """把若干同构场压成 (count, points) 矩阵"""
        if not fields:
            return np.zeros((0, 0), dtype=np.complex128)
        return np.stack([f.values.reshape(-1) for f in fields])

    @staticmethod
    def stack_spectra(fields: Sequence[GridFunction]) -> np.ndarray:
        if not fields:
            return np.zeros((0, 0), dtype=np.complex128)
        return np.stack([f.spectrum.reshape(-1) for f in fields])
