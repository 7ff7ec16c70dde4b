# services/scaling_service.py
"""
标度律测量

变体:
- main: ‖Σ_{n<=N} E_n·B_n‖_{Ẇ^{−1,d/(d−1)}} 对 N^{1−1/d}
  (d = 2 用精确 q = 2 对偶范数; d >= 3 用 Riesz 位势代理, 并附对偶下界)
- triangle: Σ_{n<=N} ‖E_n·B_n‖ 线性基线 (缺省 L¹, 可选负阶 Sobolev 代理)
- lorentz: ‖Σ λ_n E_n·B_n‖ 对 ‖λ‖_{ℓ^{d/(d−1),1}}
- interpolated: ‖Σ λ_n E_n·B_n‖_{Ẇ^{−d/q',q}} 对 ‖λ‖_{ℓ^q}, 1 < q < d/(d−1)
- liebsob: ‖Σ_{n<=N} |ψ_n|^2‖_{L^{d/(d−2)}} 对 M^{2/d} N^{1−2/d}, ψ 为 Ḣ¹ 正交归一的 C^M 值平面波
"""
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import FamilyError
from app.core.parallel import map_cells
from app.models.field import ScalarField
from app.models.grid import Grid
from app.schemas.family import FamilyRecipe
from app.schemas.record import ExperimentRecord
from app.schemas.weights import SequenceWeights
from app.services.experiment_support import summarize_series
from app.services.family_service import FamilyService
from app.services.field_service import FieldService
from app.services.norm_service import NormService

logger = logging.getLogger(__name__)

VARIANTS = ("main", "triangle", "lorentz", "interpolated", "liebsob")
WEIGHTED_VARIANTS = ("lorentz", "interpolated")


def _check_n_list(n_list: Sequence[int]) -> List[int]:
    values = [int(n) for n in n_list]
    if not values:
        raise ValueError("N_list 不能为空")
    if values[0] < 1 or any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"N_list 必须为严格递增的正整数, 收到 {values}")
    return values


class ScalingService:
    """标度律实验"""

    @staticmethod
    def main_norm(g: ScalarField, q: float, certify_steps: Optional[int] = None,
                  certify_step_size: Optional[float] = None) -> Tuple[float, Dict[str, Any]]:
        """
        主定理左端 ‖g‖_{Ẇ^{−1,q}}

        q = 2 时为精确对偶范数; 否则为 Riesz 位势代理 ‖(−Δ)^{−1/2} g‖_{L^q},
        并在 extras 中给出对偶上升法的可证下界

        extras["norm_window"] = [下界, 代理值]; 真实范数落在 [下界, C_eq · 代理值] 内
        """
        if abs(q - 2.0) < 1e-12:
            value, _ = NormService.dual_norm_h1(g)
            return value, {"exact": True, "norm_window": [value, value]}
        value = NormService.neg_sobolev_proxy(g, 1.0, q)
        ascent = NormService.dual_ascent(g, q, certify_steps, certify_step_size)
        return value, {
            "exact": False,
            "lower_bound": ascent.lower_bound,
            "ascent_accepted": ascent.accepted,
            "norm_window": [ascent.lower_bound, value],
        }

    @staticmethod
    def norm_window(extras: Sequence[Dict[str, Any]]) -> Optional[Dict[str, Any]]:
        """
        汇总各 N 的 [下界, 代理值] 窗口

        equivalence_constant 为观测到的 max(下界 / 代理值), 即使 下界 <= C_eq · 代理值
        在全部 N 上成立的最小 C_eq; 没有窗口时返回 None
        """
        windows = [e["norm_window"] for e in extras if "norm_window" in e]
        if not windows:
            return None
        ratios = [lower / upper for lower, upper in windows if upper > 0]
        return {
            "lower": [w[0] for w in windows],
            "upper": [w[1] for w in windows],
            "equivalence_constant": max(ratios) if ratios else None,
        }

    @staticmethod
    def _weights_for(weights: Optional[SequenceWeights], max_n: int) -> np.ndarray:
        if weights is None:
            return np.ones(max_n)
        if len(weights) < max_n:
            raise ValueError(f"权重序列长度 {len(weights)} 小于 max(N_list)={max_n}")
        return weights.as_array()[:max_n]

    @staticmethod
    def scaling_study(variant: str, grid: Grid, recipe: Optional[FamilyRecipe], n_list: Sequence[int],
                      q: Optional[float] = None, s: Optional[float] = None, weights: Optional[SequenceWeights] = None,
                      components: Optional[Sequence[int]] = None, triangle_norm: str = "l1",
                      certify_steps: Optional[int] = None, certify_step_size: Optional[float] = None,
                      seed: int = 0, jobs: int = 1) -> ExperimentRecord:
        """
        对每个 N 计算左端与右端预测值, 记录序列、拟合指数与常数稳定比

        Args:
            variant: main / triangle / lorentz / interpolated / liebsob
            grid: 网格
            recipe: [family] 配方 (liebsob 可为空, 半径按 N 自动选取)
            n_list: 严格递增的 N 序列
            q: 范数指数; main / lorentz 为 d/(d−1), interpolated 在 (1, d/(d−1)) 内
            s: interpolated 的负阶 Sobolev 阶, 缺省 d/q'
            weights: lorentz / interpolated 的系数 λ (缺省全 1)
            components: liebsob 的分量数列表 M
            triangle_norm: triangle 变体的逐项范数, l1 或 neg_sobolev
            certify_steps, certify_step_size: 对偶下界上升法参数
            seed: 主种子
            jobs: 并行线程数

        Returns:
            ExperimentRecord

        Raises:
            FamilyError: 族成员少于 max(N_list)
            ValueError: q 不合法、N_list 非递增等
        """
        if variant not in VARIANTS:
            raise ValueError(f"未知变体 {variant}, 可选 {VARIANTS}")
        n_list = _check_n_list(n_list)
        d = grid.dim
        logger.info(f"[ScalingStudy] variant={variant} d={d} n={grid.n} N_list={n_list} seed={seed}")

        if variant == "liebsob":
            return ScalingService._liebsob(grid, recipe, n_list, components or [1], seed, jobs)
        if recipe is None:
            raise FamilyError(f"{variant} 变体需要 [family] 配方")

        critical = d / (d - 1.0)
        if variant in ("main", "lorentz"):
            q = critical if q is None else q
            if abs(q - critical) > 1e-12:
                raise ValueError(f"{variant} 变体需要 q = d/(d−1) = {critical}, 收到 {q}")
        elif variant == "interpolated":
            if q is None or not 1.0 < q < critical:
                raise ValueError(f"interpolated 变体需要 1 < q < d/(d−1) = {critical}, 收到 {q}")
        elif triangle_norm not in ("l1", "neg_sobolev"):
            raise ValueError(f"triangle_norm 只能是 l1 或 neg_sobolev, 收到 {triangle_norm}")

        max_n = n_list[-1]
        pair = FamilyService.build_pair(grid, recipe, seed)
        if max_n > pair.capacity:
            raise FamilyError(f"族只有 {pair.capacity} 个可用成员, max(N_list)={max_n}")
        e_list, b_list = pair.members(max_n)
        lam = ScalingService._weights_for(weights if variant in WEIGHTED_VARIANTS else None, max_n)

        # 累加到每个 N 的快照
        snapshots: List[ScalarField] = []
        term_sums: List[float] = []
        running = ScalarField.zeros(grid)
        term_total = 0.0
        wanted = set(n_list)
        for index in range(max_n):
            term = FieldService.pointwise_dot_sum([e_list[index]], [b_list[index]])
            if variant == "triangle":
                if triangle_norm == "l1":
                    term_total += NormService.lp_norm(term, 1.0)
                else:
                    term_total += NormService.neg_sobolev_proxy(FieldService.remove_mean(term), 1.0, critical)
            else:
                running = running + term * float(lam[index])
            if index + 1 in wanted:
                snapshots.append(running)
                term_sums.append(term_total)

        def measure(cell: int) -> Tuple[float, float, Dict[str, Any]]:
            N = n_list[cell]
            if variant == "triangle":
                return term_sums[cell], float(N), {}
            g = FieldService.remove_mean(snapshots[cell])
            if variant == "main":
                value, extras = ScalingService.main_norm(g, q, certify_steps, certify_step_size)
                return value, N ** (1.0 - 1.0 / d), extras
            if variant == "lorentz":
                value, extras = ScalingService.main_norm(g, q, certify_steps, certify_step_size)
                return value, NormService.lorentz_q1_norm(lam[:N], d), extras
            order = d * (q - 1.0) / q if s is None else s
            value = NormService.neg_sobolev_proxy(g, order, q)
            return value, NormService.lq_norm(lam[:N], q), {"s": order}

        cells = map_cells(measure, range(len(n_list)), jobs)
        measured = [c[0] for c in cells]
        predictors = [c[1] for c in cells]
        extras = [c[2] for c in cells]
        for N, value, predicted in zip(n_list, measured, predictors):
            logger.info(f"[ScalingStudy] N={N} measured={value:.6g} predictor={predicted:.6g}")

        summary = summarize_series(n_list, measured, predictors, extras)
        fit = summary["fit"]
        if fit is None:
            logger.warning(f"[ScalingStudy] 序列只有 {len(n_list)} 个点, 不拟合指数")
        window = ScalingService.norm_window(extras)
        if window is not None:
            logger.info(f"[ScalingStudy] 范数窗口 C_eq={window['equivalence_constant']}")
        return ExperimentRecord(
            experiment="scaling_study",
            variant=variant,
            dim=d,
            points_per_axis=grid.n,
            seed=seed,
            series=summary["series"],
            fit=fit,
            predictor_exponent=summary["predictor_exponent"],
            stability_ratio=summary["stability_ratio"],
            metrics={
                "exponent": fit.exponent if fit else None,
                "ratio_spread": summary["stability_ratio"],
                "equivalence_constant": window["equivalence_constant"] if window else None,
            },
            details={
                "q": q,
                "norm_window": window,
                "triangle_norm": triangle_norm if variant == "triangle" else None,
                "capacity": pair.capacity,
                "e_family": pair.e.descriptor.model_dump(),
                "b_family": pair.b.descriptor.model_dump(),
                "e_orthogonal": pair.e_orthogonal,
                "b_orthogonal": pair.b_orthogonal,
                "weights": lam.tolist() if variant in WEIGHTED_VARIANTS else None,
            },
        )

    @staticmethod
    def _liebsob(grid: Grid, recipe: Optional[FamilyRecipe], n_list: List[int], components: Sequence[int],
                 seed: int, jobs: int) -> ExperimentRecord:
        """
        Σ|ψ_n|^2 的 L^{d/(d−2)} 范数, 每个 M 一条序列;
        记录的主序列取 components[0], 分量比取最大 N 处 max(M) 与 min(M) 的实测值之比
        """
        d = grid.dim
        if d < 3:
            raise ValueError(f"liebsob 变体需要 d >= 3, 当前 d = {d}")
        components = [int(m) for m in components]
        if not components or min(components) < 1:
            raise ValueError(f"components 必须为正整数列表, 收到 {components}")
        max_n = n_list[-1]
        p = d / (d - 2.0)

        def run_components(M: int) -> Dict[str, Any]:
            if recipe is not None and recipe.radius is not None:
                radius = recipe.radius
            else:
                radius = FamilyService.radius_for_count(grid, int(np.ceil(max_n / M)), canonical=False)
            family = FamilyService.plane_wave_h1_family(grid, radius, M)
            if len(family) < max_n:
                raise FamilyError(f"M={M} 的 Ḣ¹ 族只有 {len(family)} 个成员, max(N_list)={max_n}")
            density = np.zeros(grid.shape)
            measured, wanted = [], set(n_list)
            for index in range(max_n):
                density += FieldService.pointwise_magnitude_squared(family[index]).values.real
                if index + 1 in wanted:
                    measured.append(NormService.lp_norm(ScalarField(grid, density), p))
            predictors = [M ** (2.0 / d) * N ** (1.0 - 2.0 / d) for N in n_list]
            return {"M": M, "radius": radius, "measured": measured, "predictors": predictors,
                    "descriptor": family.descriptor.model_dump()}

        runs = map_cells(run_components, components, jobs)
        summaries = [summarize_series(n_list, run["measured"], run["predictors"]) for run in runs]
        exponents = [s["fit"].exponent for s in summaries if s["fit"] is not None]
        spreads = [s["stability_ratio"] for s in summaries if s["stability_ratio"] is not None]

        component_ratio = None
        if len(runs) > 1:
            lo = min(range(len(runs)), key=lambda i: runs[i]["M"])
            hi = max(range(len(runs)), key=lambda i: runs[i]["M"])
            if runs[lo]["measured"][-1] > 0:
                component_ratio = runs[hi]["measured"][-1] / runs[lo]["measured"][-1]

        primary = summaries[0]
        return ExperimentRecord(
            experiment="scaling_study",
            variant="liebsob",
            dim=d,
            points_per_axis=grid.n,
            seed=seed,
            series=primary["series"],
            fit=primary["fit"],
            predictor_exponent=primary["predictor_exponent"],
            stability_ratio=primary["stability_ratio"],
            metrics={
                "exponent": max(exponents) if len(exponents) == len(runs) else None,
                "ratio_spread": max(spreads) if spreads else None,
                "component_ratio": component_ratio,
            },
            details={
                "p": p,
                "components": components,
                "by_components": [
                    {
                        "M": run["M"],
                        "radius": run["radius"],
                        "family": run["descriptor"],
                        "measured": run["measured"],
                        "exponent": summary["fit"].exponent if summary["fit"] else None,
                        "stability_ratio": summary["stability_ratio"],
                    }
                    for run, summary in zip(runs, summaries)
                ],
            },
        )
