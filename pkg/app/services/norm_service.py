# services/norm_service.py
"""
不等式中出现的全部泛函

- L^p 范数, 齐次 Sobolev 半范
- 负阶 Sobolev 范数: Riesz 位势代理 ‖(−Δ)^{−s/2} g‖_{L^q}, q = 2 时的精确对偶范数,
  以及对一般 q 的对偶下界上升法
- Lorentz ℓ^{d/(d−1),1} 范数 (层饼积分归一化) 与弱 ℓ^p 泛函
- Hölder 链与逐点 Schwarz 不等式的检验
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import ConstraintViolationError
from app.models.base import GridFunction
from app.models.field import ScalarField, VectorField
from app.schemas.weights import SequenceWeights
from app.services.calculus_service import CalculusService
from app.services.field_service import FieldService

logger = logging.getLogger(__name__)

WeightsLike = Union[SequenceWeights, Sequence[float], np.ndarray]

# |∇u|^{q'−2} 的正则化 (q' < 2 时避免零点奇异)
_GRADIENT_EPS = 1e-24


def _as_weights(weights: WeightsLike) -> SequenceWeights:
    if isinstance(weights, SequenceWeights):
        return weights
    return SequenceWeights(values=[float(v) for v in np.asarray(weights, dtype=float).ravel()])


@dataclass
class DualAscent:
    """对偶下界上升的完整结果"""
    lower_bound: float
    witness: ScalarField
    trace: List[float] = field(default_factory=list)
    accepted: int = 0


class NormService:
    """范数与不等式泛函"""

    # ------------------------------------------------------------------
    # 场的范数
    # ------------------------------------------------------------------

    @staticmethod
    def magnitude(f: GridFunction) -> np.ndarray:
        """逐点模 |f(x)|, 多分量场取欧氏模"""
        return np.sqrt(FieldService.pointwise_magnitude_squared(f).values.real)

    @staticmethod
    def lp_norm(f: GridFunction, p: float) -> float:
        """(∫ |f|^p)^{1/p}, 归一化求积; p = inf 时为最大模"""
        if p < 1:
            raise ValueError(f"lp_norm 需要 p >= 1, 收到 {p}")
        mag = NormService.magnitude(f)
        if np.isinf(p):
            return float(np.max(mag))
        return float(np.mean(mag ** p) ** (1.0 / p))

    @staticmethod
    def sobolev_seminorm(f: ScalarField, s: float, p: float) -> float:
        """s = 1 取 ‖∇f‖_{L^p}; 分数阶取 ‖(−Δ)^{s/2} f‖_{L^p}"""
        if s <= 0:
            raise ValueError(f"sobolev_seminorm 需要 s > 0, 收到 {s}")
        if s == 1:
            return NormService.lp_norm(CalculusService.gradient(f), p)
        return NormService.lp_norm(CalculusService.fractional_laplacian(f, s), p)

    # ------------------------------------------------------------------
    # 负阶 Sobolev
    # ------------------------------------------------------------------

    @staticmethod
    def _require_zero_mean(g: GridFunction, tol: float = 1e-12) -> None:
        mean = float(np.max(np.abs(np.atleast_1d(g.mean))))
        if mean > tol:
            raise ConstraintViolationError("负阶 Sobolev 范数需要零均值输入", mean, tol)

    @staticmethod
    def neg_sobolev_proxy(g: ScalarField, s: float, q: float) -> float:
        """‖(−Δ)^{−s/2} g‖_{L^q}; q = 2 时恰为对偶范数"""
        if s <= 0 or q <= 1:
            raise ValueError(f"neg_sobolev_proxy 需要 s > 0, q > 1, 收到 s={s}, q={q}")
        NormService._require_zero_mean(g)
        return NormService.lp_norm(CalculusService.fractional_laplacian(g, -s), q)

    @staticmethod
    def dual_norm_h1(g: ScalarField) -> Tuple[float, ScalarField]:
        """
        精确对偶范数 sup_{‖∇u‖_2 = 1} |⟨u, g⟩| 与达到上确界的 u

        Returns:
            (范数值, 归一化见证函数 u = (−Δ)^{-1}g / ‖∇(−Δ)^{-1}g‖_2)
        """
        NormService._require_zero_mean(g)
        potential = CalculusService.fractional_laplacian(g, -2.0)
        energy = CalculusService.dirichlet_inner(potential, potential).real
        if energy <= 0:
            return 0.0, ScalarField.zeros(g.grid)
        norm = float(np.sqrt(energy))
        return norm, potential * (1.0 / norm)

    @staticmethod
    def _dual_objective(u: ScalarField, g: ScalarField, q_dual: float) -> Tuple[float, float]:
        """返回 (Re⟨u,g⟩ / ‖∇u‖_{q'}, ‖∇u‖_{q'})"""
        denom = NormService.lp_norm(CalculusService.gradient(u), q_dual)
        if denom == 0:
            return 0.0, 0.0
        return FieldService.inner_product(u, g).real / denom, denom

    @staticmethod
    def dual_ascent(g: ScalarField, q: float, steps: Optional[int] = None,
                    step_size: Optional[float] = None) -> DualAscent:
        """
        对偶范数 ‖g‖_{Ẇ^{−1,q}} 的下界上升

        在 ‖∇u‖_{q'} = 1 上最大化 Re⟨u, g⟩。从 q = 2 的最优函数出发,
        沿 (−Δ)^{-1} 预条件梯度方向试探, 只接受使目标增大的步, 否则步长减半;
        因此 trace 单调不减, 且每个值都是真实对偶范数的下界。

        Args:
            g: 零均值标量场
            q: 指数 q > 1, 对偶指数 q' = q/(q−1)
            steps: 评估的迭代点个数 (含初始点); steps = 1 只评估初始见证函数
            step_size: 初始相对步长

        Returns:
            DualAscent (下界、见证函数、接受步目标序列)
        """
        settings = get_settings()
        steps = settings.DUAL_CERTIFY_STEPS if steps is None else steps
        step_size = settings.DUAL_CERTIFY_STEP_SIZE if step_size is None else step_size
        if steps <= 0:
            raise ValueError(f"steps 必须为正, 收到 {steps}")
        if step_size <= 0:
            raise ValueError(f"step_size 必须为正, 收到 {step_size}")
        if q <= 1:
            raise ValueError(f"dual_certify 需要 q > 1, 收到 {q}")
        NormService._require_zero_mean(g)

        q_dual = q / (q - 1.0)
        _, u = NormService.dual_norm_h1(g)
        value, denom = NormService._dual_objective(u, g, q_dual)
        if denom == 0:
            return DualAscent(lower_bound=0.0, witness=ScalarField.zeros(g.grid), trace=[0.0])
        u = u * (1.0 / denom)
        trace = [value]
        accepted = 0
        step = step_size

        for iteration in range(1, steps):
            direction = NormService._ascent_direction(u, g, value, q_dual)
            scale = np.sqrt(max(CalculusService.dirichlet_inner(direction, direction).real, 0.0))
            if scale == 0:
                break
            candidate = u + direction * (step / scale)
            cand_value, cand_denom = NormService._dual_objective(candidate, g, q_dual)
            if cand_denom > 0 and cand_value > value:
                u = candidate * (1.0 / cand_denom)
                value = cand_value
                accepted += 1
                step = min(step * 1.5, step_size * 4)
            else:
                step *= 0.5
            trace.append(value)
            logger.debug(f"[DualCertify] iter={iteration} value={value:.12g} step={step:.3g}")

        return DualAscent(lower_bound=float(value), witness=u, trace=trace, accepted=accepted)

    @staticmethod
    def _ascent_direction(u: ScalarField, g: ScalarField, value: float, q_dual: float) -> ScalarField:
        """
        ‖∇u‖_{q'} = 1 处 J(u) = Re⟨u,g⟩/‖∇u‖_{q'} 的 L^2 梯度为 g + J·div(|∇u|^{q'−2}∇u),
        再用 (−Δ)^{-1} 预条件
        """
        grad_u = CalculusService.gradient(u)
        weight = (FieldService.pointwise_magnitude_squared(grad_u).values.real + _GRADIENT_EPS) ** ((q_dual - 2.0) / 2.0)
        flux = VectorField(u.grid, grad_u.values * weight[None])
        l2_gradient = g + CalculusService.divergence(flux) * value
        l2_gradient = FieldService.remove_mean(l2_gradient)
        return CalculusService.fractional_laplacian(l2_gradient, -2.0)

    @staticmethod
    def dual_certify(g: ScalarField, q: float, steps: Optional[int] = None,
                     step_size: Optional[float] = None) -> Tuple[float, ScalarField]:
        """对偶范数的可证下界 (lower_bound, witness)"""
        result = NormService.dual_ascent(g, q, steps, step_size)
        return result.lower_bound, result.witness

    # ------------------------------------------------------------------
    # 序列泛函
    # ------------------------------------------------------------------

    @staticmethod
    def lorentz_q1_norm(weights: WeightsLike, d: int) -> float:
        """Σ_n λ*_n (n^{1−1/d} − (n−1)^{1−1/d}), 即层饼积分 ∫ #{λ_n > τ}^{1−1/d} dτ 的精确值"""
        if d < 2:
            raise ValueError(f"lorentz_q1_norm 需要 d >= 2, 收到 {d}")
        lam = _as_weights(weights).rearranged()
        if lam.size == 0:
            return 0.0
        n = np.arange(1, lam.size + 1, dtype=float)
        exponent = 1.0 - 1.0 / d
        increments = n ** exponent - (n - 1.0) ** exponent
        return float(np.sum(lam * increments))

    @staticmethod
    def layer_cake_integral(weights: WeightsLike, d: int) -> float:
        """
        按中点法则逐段积分 τ ↦ #{λ_n > τ}^{1−1/d}

        被积函数在相邻取值之间为常数, 中点取样对阶梯函数是精确的
        """
        lam = _as_weights(weights).as_array()
        levels = np.unique(np.concatenate([[0.0], lam]))
        total = 0.0
        for lo, hi in zip(levels[:-1], levels[1:]):
            mid = 0.5 * (lo + hi)
            count = np.count_nonzero(lam > mid)
            total += (hi - lo) * count ** (1.0 - 1.0 / d)
        return float(total)

    @staticmethod
    def lq_norm(weights: WeightsLike, q: float) -> float:
        if q < 1:
            raise ValueError(f"ℓ^q 范数需要 q >= 1, 收到 {q}")
        lam = _as_weights(weights).as_array()
        if lam.size == 0:
            return 0.0
        return float(np.sum(lam ** q) ** (1.0 / q))

    @staticmethod
    def weak_lp_functional(s: Sequence[float], p: float) -> float:
        """sup_n n^{1/p} s_n, s 必须非负且非增"""
        if p <= 0:
            raise ValueError(f"weak_lp_functional 需要 p > 0, 收到 {p}")
        values = np.asarray(s, dtype=float)
        if values.size == 0:
            return 0.0
        if np.any(values < 0):
            raise ValueError("奇异值序列含负数")
        if np.any(np.diff(values) > 0):
            raise ValueError("weak_lp_functional 需要非增排列的输入")
        n = np.arange(1, values.size + 1, dtype=float)
        return float(np.max(n ** (1.0 / p) * values))

    # ------------------------------------------------------------------
    # 不等式链
    # ------------------------------------------------------------------

    @staticmethod
    def holder_chain(f: ScalarField, g: GridFunction, d: int) -> Tuple[float, float]:
        """
        ‖f g‖_{L^{d/(d−1)}} <= ‖f^2‖_{L^{d/(d−2)}}^{1/2} ‖g^2‖_{L^1}^{1/2}

        g 可以是向量场 (逐点取模); d = 2 时 d/(d−2) 取 ∞
        """
        if d < 2:
            raise ValueError(f"holder_chain 需要 d >= 2, 收到 {d}")
        f_mag = NormService.magnitude(f)
        g_mag = NormService.magnitude(g)
        product = ScalarField(f.grid, f_mag * g_mag)
        lhs = NormService.lp_norm(product, d / (d - 1.0))
        outer = np.inf if d == 2 else d / (d - 2.0)
        rhs = (NormService.lp_norm(ScalarField(f.grid, f_mag ** 2), outer) ** 0.5
               * NormService.lp_norm(ScalarField(f.grid, g_mag ** 2), 1.0) ** 0.5)
        return lhs, rhs

    @staticmethod
    def pointwise_schwarz_violation(phis: Sequence[ScalarField], fields: Sequence[VectorField]) -> float:
        """
        max_x ( |Σ φ_n B_n| − (Σ|φ_n|^2)^{1/2} (Σ|B_n|^2)^{1/2} ), 非正即成立
        """
        if len(phis) != len(fields) or not phis:
            raise ValueError("φ 与 B 列表必须等长且非空")
        combo = np.zeros_like(fields[0].values)
        phi_sq = np.zeros(phis[0].grid.shape)
        b_sq = np.zeros(phis[0].grid.shape)
        for phi, b_field in zip(phis, fields):
            combo = combo + phi.values[None] * b_field.values
            phi_sq += np.abs(phi.values) ** 2
            b_sq += np.sum(np.abs(b_field.values) ** 2, axis=0)
        lhs = np.sqrt(np.sum(np.abs(combo) ** 2, axis=0))
        rhs = np.sqrt(phi_sq) * np.sqrt(b_sq)
        return float(np.max(lhs - rhs))
