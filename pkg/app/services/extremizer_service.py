# services/extremizer_service.py
"""
极值搜索 - 在参数化正交族上最大化 ‖Σ_{n<=N} E_n·B_n‖_{Ẇ^{−1,d/(d−1)}} / N^{1−1/d}

参数化: 模态池上的成对平面波族 (e_i), (b_i) (各 2·pool_modes 个成员) 与
两个列正交的混合矩阵 Q_E, Q_B (形状 2P × N):
    E_n = Σ_i Q_E[i, n] e_i,   B_n = Σ_i Q_B[i, n] b_i
列正交保证 (E_n)、(B_n) 仍是正交归一族, 且约束 (无旋 / 无散) 逐项保持。

上升: 随机方向试探 + QR 收缩回正交列, 只接受使目标增大的步, 步长自适应。
结果只是证据, 不对最优性下结论。
"""
import logging
from typing import Tuple

import numpy as np

from app.core.exceptions import FamilyError
from app.models.field import ScalarField
from app.models.grid import Grid
from app.schemas.family import FamilyRecipe
from app.schemas.record import ExperimentRecord, SeriesPoint
from app.services.experiment_support import STREAM_MIXING, stream_rng
from app.services.family_service import FamilyService
from app.services.field_service import FieldService
from app.services.norm_service import NormService

logger = logging.getLogger(__name__)

_STEP_GROWTH = 1.2
_STEP_SHRINK = 0.5
_MIN_STEP = 1e-8


def _retract(matrix: np.ndarray) -> np.ndarray:
    """QR 收缩到列正交矩阵, 符号按 R 的对角线归一"""
    q, r = np.linalg.qr(matrix)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs[None, :]


class ExtremizerService:
    """主比值的探索性最大化"""

    @staticmethod
    def objective(e_stack: np.ndarray, b_stack: np.ndarray, q_e: np.ndarray, q_b: np.ndarray,
                  grid: Grid) -> float:
        """
        ‖Σ_n E_n·B_n‖ / N^{1−1/d}

        d = 2 用精确对偶范数, d >= 3 用 Riesz 位势代理
        """
        d = grid.dim
        count = q_e.shape[1]
        e_fields = np.tensordot(q_e.T, e_stack, axes=1)
        b_fields = np.tensordot(q_b.T, b_stack, axes=1)
        density = np.sum(e_fields * b_fields, axis=0).reshape((d,) + grid.shape).sum(axis=0)
        g = FieldService.remove_mean(ScalarField(grid, density))
        if d == 2:
            value, _ = NormService.dual_norm_h1(g)
        else:
            value = NormService.neg_sobolev_proxy(g, 1.0, d / (d - 1.0))
        return value / count ** (1.0 - 1.0 / d)

    @staticmethod
    def pool(grid: Grid, pool_modes: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        模态池: 半经典顺序的前 pool_modes 个代表模态, 按 rotate 规则配成 (e_i, b_i)

        Returns:
            (modes, e_stack, b_stack), stack 形状 (2P, d·n^d)
        """
        radius = FamilyService.radius_for_count(grid, pool_modes, canonical=True)
        modes = FamilyService.semiclassical_modes(grid, radius)[:pool_modes]
        pair = FamilyService.build_pair(grid, FamilyRecipe(recipe="modes", modes=modes.tolist()), seed=0)
        return modes, FieldService.stack_values(pair.e.members), FieldService.stack_values(pair.b.members)

    @staticmethod
    def extremizer_search(grid: Grid, N: int, pool_modes: int, steps: int, step_size: float = 0.1,
                          seed: int = 0) -> ExperimentRecord:
        """
        Args:
            grid: 网格
            N: 族的成员数
            pool_modes: 模态池大小, 池成员数为 2·pool_modes
            steps: 试探步数; 0 表示只评估初始族
            step_size: 初始步长
            seed: 主种子 (子流 STREAM_MIXING)

        Returns:
            ExperimentRecord; 序列为接受步后的目标值 (单调不减), details 中保存最优混合矩阵

        Raises:
            FamilyError: 池成员数小于 N
        """
        if N < 1:
            raise FamilyError(f"N 必须 >= 1, 收到 {N}")
        if 2 * pool_modes < N:
            raise FamilyError(f"模态池只有 {2 * pool_modes} 个成员, 小于 N={N}")
        if steps < 0 or step_size <= 0:
            raise ValueError(f"需要 steps >= 0 且 step_size > 0, 收到 steps={steps}, step_size={step_size}")
        logger.info(f"[Extremizer] d={grid.dim} n={grid.n} N={N} pool_modes={pool_modes} steps={steps} seed={seed}")

        modes, e_stack, b_stack = ExtremizerService.pool(grid, pool_modes)
        size = e_stack.shape[0]
        rng = stream_rng(seed, STREAM_MIXING)

        q_e = np.eye(size)[:, :N]
        q_b = np.eye(size)[:, :N]
        value = ExtremizerService.objective(e_stack, b_stack, q_e, q_b, grid)
        initial = value
        trace = [value]
        accepted = 0
        step = step_size

        for iteration in range(1, steps + 1):
            cand_e = _retract(q_e + step * rng.standard_normal(q_e.shape))
            cand_b = _retract(q_b + step * rng.standard_normal(q_b.shape))
            cand_value = ExtremizerService.objective(e_stack, b_stack, cand_e, cand_b, grid)
            if cand_value > value:
                q_e, q_b, value = cand_e, cand_b, cand_value
                accepted += 1
                step *= _STEP_GROWTH
            else:
                step = max(step * _STEP_SHRINK, _MIN_STEP)
            trace.append(value)
            logger.debug(f"[Extremizer] step={iteration} objective={value:.12g} step_size={step:.3g}")

        logger.info(f"[Extremizer] 初始 {initial:.6g} -> 最终 {value:.6g}, 接受 {accepted}/{steps} 步")
        # 上升轨迹不做幂律拟合
        monotone = all(b >= a for a, b in zip(trace, trace[1:]))
        return ExperimentRecord(
            experiment="extremizer_search",
            dim=grid.dim,
            points_per_axis=grid.n,
            seed=seed,
            series=[SeriesPoint(control=float(i), measured=float(v)) for i, v in enumerate(trace)],
            metrics={
                "initial_objective": initial,
                "final_objective": value,
                "improvement": value / initial if initial > 0 else None,
            },
            details={
                "N": N,
                "pool_modes": modes.tolist(),
                "steps": steps,
                "accepted": accepted,
                "monotone": monotone,
                "step_size": step_size,
                "norm": "dual_h1" if grid.dim == 2 else "riesz_potential_proxy",
                "mixing_e": q_e.tolist(),
                "mixing_b": q_b.tolist(),
            },
        )
