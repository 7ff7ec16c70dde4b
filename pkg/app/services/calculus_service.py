# services/calculus_service.py
"""
微分与奇异积分算子 - 全部以频域乘子实现

约定:
- ∂_j 的符号为 i·k_j
- Riesz 变换 R = (−i∇)(−Δ)^{−1/2}, 分量符号 k_j/|k|, 零模态取 0
- 齐次算子把零模态送到 0
- 二形式 (curl F)_{jk} = ∂_j F_k − ∂_k F_j (j<k); 余微分 (d*α)_k = −Σ_j ∂_j α_{jk}
- 位势构造按频率闭式求解, 不使用迭代求解器
"""
import logging
from itertools import combinations
from typing import Dict, Optional

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import ConstraintViolationError, GridMismatchError
from app.models.base import GridFunction
from app.models.field import ScalarField, TwoFormField, VectorField, form_pairs
from app.models.grid import Grid
from app.services.field_service import FieldService

logger = logging.getLogger(__name__)


def _safe_inverse(values: np.ndarray) -> np.ndarray:
    """1/x, 在 x = 0 处取 0"""
    out = np.zeros_like(values, dtype=float)
    nonzero = values != 0
    out[nonzero] = 1.0 / values[nonzero]
    return out


def _tolerance(tol: Optional[float]) -> float:
    return get_settings().RESIDUAL_TOL if tol is None else tol


class CalculusService:
    """
    梯度 / 散度 / 旋度 / Riesz 变换 / Leray 投影 / 分数阶 Laplace
    以及 Hodge 位势 (标量位势、二形式位势、三维向量位势)
    """

    # ------------------------------------------------------------------
    # 基本微分算子
    # ------------------------------------------------------------------

    @staticmethod
    def _require_dim_components(F: VectorField) -> None:
        if F.count != F.grid.dim:
            raise GridMismatchError(f"需要 {F.grid.dim} 个分量的向量场, 收到 {F.count} 个")

    @staticmethod
    def gradient(phi: ScalarField) -> VectorField:
        """∇φ: 第 j 分量频谱为 i·k_j·φ̂(k)"""
        K = phi.grid.wavevectors
        return VectorField.from_spectrum(phi.grid, 1j * K * phi.spectrum[None])

    @staticmethod
    def divergence(F: VectorField) -> ScalarField:
        """∇·F: 频谱 Σ_j i·k_j·F̂_j(k)"""
        CalculusService._require_dim_components(F)
        K = F.grid.wavevectors
        return ScalarField.from_spectrum(F.grid, np.sum(1j * K * F.spectrum, axis=0))

    @staticmethod
    def curl(F: VectorField) -> TwoFormField:
        """反对称梯度, 按 (j,k), j<k 输出二形式"""
        CalculusService._require_dim_components(F)
        K = F.grid.wavevectors
        F_hat = F.spectrum
        comps = [1j * (K[j] * F_hat[k] - K[k] * F_hat[j]) for j, k in form_pairs(F.grid.dim)]
        return TwoFormField.from_spectrum(F.grid, np.stack(comps))

    @staticmethod
    def riesz_symbol(grid: Grid, j: int) -> np.ndarray:
        return grid.wavevectors[j] * _safe_inverse(grid.k_norm)

    @staticmethod
    def riesz_component(f: ScalarField, j: int) -> ScalarField:
        return FieldService.apply_multiplier(f, CalculusService.riesz_symbol(f.grid, j))

    @staticmethod
    def riesz(f: ScalarField) -> VectorField:
        """Rf, 第 j 分量乘子 k_j/|k| (零模态为 0)"""
        symbol = f.grid.wavevectors * _safe_inverse(f.grid.k_norm)[None]
        return VectorField.from_spectrum(f.grid, symbol * f.spectrum[None])

    @staticmethod
    def leray_project(F: VectorField) -> VectorField:
        """无散投影 F̂ − k(k·F̂)/|k|^2, 零模态原样保留"""
        CalculusService._require_dim_components(F)
        K = F.grid.wavevectors
        F_hat = F.spectrum
        k_dot = np.sum(K * F_hat, axis=0)
        return VectorField.from_spectrum(F.grid, F_hat - K * (k_dot * _safe_inverse(F.grid.k_squared))[None])

    @staticmethod
    def fractional_laplacian(f: GridFunction, s: float, mean_tol: float = 1e-12) -> GridFunction:
        """
        (−Δ)^{s/2}: 乘子 |k|^s, 零模态送到 0

        Args:
            f: 任意网格场, 多分量场逐分量作用
            s: 阶数; s < 0 时要求 f 零均值
            mean_tol: 零均值判定门限
        """
        if s < 0:
            mean = float(np.max(np.abs(np.atleast_1d(f.mean))))
            if mean > mean_tol:
                raise ConstraintViolationError("负阶分数 Laplace 需要零均值输入", mean, mean_tol)
        k_norm = f.grid.k_norm
        symbol = np.zeros_like(k_norm)
        nonzero = k_norm > 0
        symbol[nonzero] = k_norm[nonzero] ** s
        return type(f).from_spectrum(f.grid, symbol * f.spectrum)

    # ------------------------------------------------------------------
    # 二形式与三维辅助
    # ------------------------------------------------------------------

    @staticmethod
    def codifferential(alpha: TwoFormField) -> VectorField:
        """(d*α)_k = −Σ_j ∂_j α_{jk}, α 反对称延拓"""
        grid = alpha.grid
        K = grid.wavevectors
        a_hat = alpha.spectrum
        out = np.zeros((grid.dim,) + grid.shape, dtype=np.complex128)
        for idx, (j, k) in enumerate(alpha.pairs):
            # α_{jk} 贡献到第 k 分量, α_{kj} = −α_{jk} 贡献到第 j 分量
            out[k] -= 1j * K[j] * a_hat[idx]
            out[j] += 1j * K[k] * a_hat[idx]
        return VectorField.from_spectrum(grid, out)

    @staticmethod
    def exterior_derivative_2form(alpha: TwoFormField) -> np.ndarray:
        """
        dα 的三形式分量 (i<j<k): ∂_i α_{jk} − ∂_j α_{ik} + ∂_k α_{ij}

        Returns:
            形状 (C(d,3), n, ..., n) 的网格值数组; d = 2 时为空
        """
        grid = alpha.grid
        K = grid.wavevectors
        a_hat = alpha.spectrum
        index = {pair: i for i, pair in enumerate(alpha.pairs)}
        comps = []
        for i, j, k in combinations(range(grid.dim), 3):
            spec = 1j * (K[i] * a_hat[index[(j, k)]] - K[j] * a_hat[index[(i, k)]] + K[k] * a_hat[index[(i, j)]])
            comps.append(np.fft.ifftn(spec) * grid.size)
        if not comps:
            return np.zeros((0,) + grid.shape, dtype=np.complex128)
        return np.stack(comps)

    @staticmethod
    def classical_curl_3d(F: VectorField) -> VectorField:
        if F.grid.dim != 3:
            raise GridMismatchError("经典旋度只在 d = 3 定义")
        return CalculusService.two_form_to_vector_3d(CalculusService.curl(F))

    @staticmethod
    def two_form_to_vector_3d(alpha: TwoFormField) -> VectorField:
        """d = 3 的标准等同: (α_{23}, −α_{13}, α_{12})"""
        if alpha.grid.dim != 3:
            raise GridMismatchError("二形式与向量场的等同只在 d = 3 成立")
        v = alpha.values
        # pairs 顺序: (0,1), (0,2), (1,2)
        return VectorField(alpha.grid, np.stack([v[2], -v[1], v[0]]))

    @staticmethod
    def vector_to_two_form_3d(F: VectorField) -> TwoFormField:
        if F.grid.dim != 3:
            raise GridMismatchError("二形式与向量场的等同只在 d = 3 成立")
        v = F.values
        return TwoFormField(F.grid, np.stack([v[2], -v[1], v[0]]))

    @staticmethod
    def cross_3d(A: VectorField, B: VectorField) -> VectorField:
        """逐点叉积 A ∧ B"""
        A.same_layout(B)
        if A.grid.dim != 3 or A.count != 3:
            raise GridMismatchError("叉积只在 d = 3 定义")
        return VectorField(A.grid, np.cross(A.values, B.values, axis=0))

    @staticmethod
    def wedge_gradient(u: ScalarField, E: VectorField) -> TwoFormField:
        """du ∧ ω_E: 分量 ∂_j u E_k − ∂_k u E_j"""
        CalculusService._require_dim_components(E)
        grad_u = CalculusService.gradient(u).values
        comps = [grad_u[j] * E.values[k] - grad_u[k] * E.values[j] for j, k in form_pairs(u.grid.dim)]
        return TwoFormField(u.grid, np.stack(comps))

    @staticmethod
    def two_form_dot(beta: TwoFormField, gamma: TwoFormField) -> ScalarField:
        """逐点 Σ_{j<k} β_{jk} γ_{jk} (不取共轭), 即 β ∧ *γ 的密度"""
        beta.same_layout(gamma)
        return ScalarField(beta.grid, np.sum(beta.values * gamma.values, axis=0))

    # ------------------------------------------------------------------
    # 能量
    # ------------------------------------------------------------------

    @staticmethod
    def dirichlet_inner(f: GridFunction, g: GridFunction) -> complex:
        """Ḣ¹ 内积 ⟨∇f, ∇g⟩ = Σ_k |k|^2 f̂ conj(ĝ), 多分量求和"""
        f.same_layout(g)
        return complex(np.sum(f.grid.k_squared * f.spectrum * np.conj(g.spectrum)))

    @staticmethod
    def gradient_energy(f: GridFunction) -> float:
        """‖∇f‖², 逐分量由显式梯度场求积 (与 dirichlet_inner 互为独立路径)"""
        if isinstance(f, ScalarField):
            return FieldService.norm(CalculusService.gradient(f)) ** 2
        values = f.values.reshape((-1,) + f.grid.shape)
        return float(sum(
            FieldService.norm(CalculusService.gradient(ScalarField(f.grid, comp))) ** 2 for comp in values
        ))

    @staticmethod
    def hodge_energy(F: VectorField) -> Dict[str, float]:
        """‖∇F‖², ‖∇∧F‖², ‖∇·F‖² 三项"""
        return {
            "gradient": CalculusService.gradient_energy(F),
            "curl": FieldService.norm(CalculusService.curl(F)) ** 2,
            "divergence": FieldService.norm(CalculusService.divergence(F)) ** 2,
        }

    # ------------------------------------------------------------------
    # 位势构造
    # ------------------------------------------------------------------

    @staticmethod
    def _check_zero_mean(F: GridFunction, tol: float, label: str) -> None:
        mean = float(np.max(np.abs(np.atleast_1d(F.mean))))
        if mean > tol:
            raise ConstraintViolationError(f"{label}需要零均值输入", mean, tol)

    @staticmethod
    def curl_residual(E: VectorField) -> float:
        return FieldService.norm(CalculusService.curl(E))

    @staticmethod
    def divergence_residual(B: VectorField) -> float:
        return FieldService.norm(CalculusService.divergence(B))

    @staticmethod
    def scalar_potential(E: VectorField, tol: Optional[float] = None) -> ScalarField:
        """
        无旋场的标量位势: 零均值 φ, ∇φ = E

        φ̂(k) = −i (k·Ê(k)) / |k|^2
        """
        tol = _tolerance(tol)
        residual = CalculusService.curl_residual(E)
        if residual > tol:
            raise ConstraintViolationError("标量位势要求无旋输入", residual, tol)
        CalculusService._check_zero_mean(E, tol, "标量位势")
        K = E.grid.wavevectors
        k_dot = np.sum(K * E.spectrum, axis=0)
        return ScalarField.from_spectrum(E.grid, -1j * k_dot * _safe_inverse(E.grid.k_squared))

    @staticmethod
    def _coulomb_preimage(B: VectorField, tol: Optional[float], label: str) -> VectorField:
        """β = (−Δ)^{-1} B, 对无散零均值 B"""
        tol = _tolerance(tol)
        CalculusService._require_dim_components(B)
        residual = CalculusService.divergence_residual(B)
        if residual > tol:
            raise ConstraintViolationError(f"{label}要求无散输入", residual, tol)
        CalculusService._check_zero_mean(B, tol, label)
        inv = _safe_inverse(B.grid.k_squared)
        return VectorField.from_spectrum(B.grid, inv[None] * B.spectrum)

    @staticmethod
    def two_form_potential(B: VectorField, tol: Optional[float] = None) -> TwoFormField:
        """
        无散场的二形式位势 α: d*α = ω_B, dα = 0

        α = d β, β = (−Δ)^{-1} ω_B; 每个频率上是与核正交的唯一解
        """
        beta = CalculusService._coulomb_preimage(B, tol, "二形式位势")
        return CalculusService.curl(beta)

    @staticmethod
    def vector_potential_3d(B: VectorField, tol: Optional[float] = None) -> VectorField:
        """d = 3: ∇∧A = B 且 ∇·A = 0"""
        if B.grid.dim != 3:
            raise GridMismatchError(f"向量位势只在 d = 3 定义, 当前 d = {B.grid.dim}")
        beta = CalculusService._coulomb_preimage(B, tol, "向量位势")
        return CalculusService.classical_curl_3d(beta)

    @staticmethod
    def riesz_preimage(E: VectorField, tol: Optional[float] = None) -> ScalarField:
        """E = R f 的 f = i (−Δ)^{1/2} φ, φ 为 E 的标量位势"""
        phi = CalculusService.scalar_potential(E, tol)
        return CalculusService.fractional_laplacian(phi, 1.0) * 1j
