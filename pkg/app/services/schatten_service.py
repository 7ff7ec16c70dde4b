# services/schatten_service.py
"""
弱 Schatten 范数研究

- commutator: ‖[R_j,u]‖_{S^p_weak} 对 ‖∇u‖_{L^d}
- cwikel (d >= 3): ‖u(−Δ)^{−1/2}‖_{S^p_weak} 对 ‖u‖_{L^d}

每个 u 记录奇异值、弱泛函 sup_n n^{1/p} s_n、比值、中段尾部斜率与部分和界的余量。
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app.core.exceptions import GridMismatchError
from app.models.field import ScalarField
from app.models.grid import Grid
from app.schemas.config import URecipe
from app.schemas.record import ExperimentRecord
from app.services.calculus_service import CalculusService
from app.services.experiment_support import RHS_SPREAD_MIN, STREAM_U, stream_rng, summarize_series, tail_slope
from app.services.family_service import FamilyService
from app.services.field_service import FieldService
from app.services.norm_service import NormService
from app.services.spectral_service import SpectralService

logger = logging.getLogger(__name__)

# 部分和界额外检验的指数 (连同 p 本身)
_PARTIAL_SUM_EXPONENTS = (1.5, 2.0)


class SchattenService:
    """交换子与 Cwikel 型算子的奇异值研究"""

    @staticmethod
    def build_u(grid: Grid, recipe: URecipe, seed: int, index: int) -> ScalarField:
        """
        按配方生成 u

        mode: amplitude · Σ_k {cos, sin, exp}(k·x); random: 带限随机实值场 (零均值),
        子流 STREAM_U + index
        """
        if recipe.kind == "mode":
            modes = FamilyService.validate_modes(grid, recipe.modes)
            phase = np.zeros(grid.shape, dtype=np.complex128)
            for k in modes:
                wave = grid.plane_wave(k)
                if recipe.phase == "cos":
                    phase += wave.real
                elif recipe.phase == "sin":
                    phase += wave.imag
                else:
                    phase += wave
            return ScalarField(grid, recipe.amplitude * phase)
        rng = stream_rng(seed if recipe.seed is None else recipe.seed, STREAM_U + index)
        u = FieldService.remove_mean(FieldService.random_real(grid, rng, recipe.band))
        return u * recipe.amplitude

    @staticmethod
    def right_side(u: ScalarField, which: str) -> float:
        """commutator: ‖∇u‖_{L^d}; cwikel: ‖u‖_{L^d}"""
        d = u.grid.dim
        if which == "commutator":
            return NormService.lp_norm(CalculusService.gradient(u), d)
        return NormService.lp_norm(u, d)

    @staticmethod
    def study_u(u: ScalarField, which: str, band: float, p: Optional[float] = None,
                component: int = 0) -> Dict[str, Any]:
        """
        单个 u 的奇异值分析

        Returns:
            dict: singular_values, weak, rhs, ratio, exact_zero, tail_slope, truncation_error,
                  partial_sum_slack (各指数、各 N 上 cap − total 的最小值)
        """
        d = u.grid.dim
        if which not in ("commutator", "cwikel"):
            raise ValueError(f"未知算子 {which}")
        if which == "cwikel" and d < 3:
            raise GridMismatchError(f"cwikel 需要 d >= 3, 当前 d = {d}")
        p = float(d) if p is None else p

        if which == "commutator":
            K = SpectralService.materialize_commutator(u, component, band)
        else:
            K = SpectralService.materialize_cwikel(u, band)
        s = K.singular_values
        weak = NormService.weak_lp_functional(s, p)
        rhs = SchattenService.right_side(u, which)
        exact_zero = weak == 0 and rhs == 0

        slack = np.inf
        for exponent in sorted({p, *_PARTIAL_SUM_EXPONENTS}):
            if exponent <= 1:
                continue
            for N in range(1, len(s) + 1):
                total, cap = SpectralService.partial_sum_bound(s, exponent, N)
                slack = min(slack, cap - total)

        return {
            "singular_values": s,
            "weak": weak,
            "rhs": rhs,
            "ratio": 0.0 if exact_zero else (weak / rhs if rhs > 0 else None),
            "exact_zero": exact_zero,
            "tail_slope": tail_slope(s),
            "truncation_error": K.truncation_error,
            "partial_sum_slack": float(slack),
            "size": int(K.shape[0]),
        }

    @staticmethod
    def schatten_study(which: str, grid: Grid, recipes: Sequence[URecipe], band: float,
                       p: Optional[float] = None, component: int = 0, seed: int = 0,
                       dump_dir: Optional[Path] = None) -> ExperimentRecord:
        """
        对 u 配方列表逐个做奇异值分析

        Args:
            which: commutator 或 cwikel
            grid: 网格
            recipes: u 配方
            band: 指标集带宽 (< n/2)
            p: 弱 Schatten 指数, 缺省 d
            component: commutator 的 Riesz 分量下标
            seed: 主种子
            dump_dir: 非空时把每个 u 的奇异值写成 CSV

        Returns:
            ExperimentRecord; 序列的控制量为右端范数, 实测为弱泛函
        """
        d = grid.dim
        if which == "cwikel" and d < 3:
            raise GridMismatchError(f"cwikel 需要 d >= 3, 当前 d = {d}")
        if not recipes:
            raise ValueError("至少需要一个 u 配方")
        p = float(d) if p is None else p
        logger.info(f"[SchattenStudy] which={which} d={d} n={grid.n} band={band} p={p} u 配方数={len(recipes)}")

        studies: List[Dict[str, Any]] = []
        for index, recipe in enumerate(recipes):
            u = SchattenService.build_u(grid, recipe, seed, index)
            study = SchattenService.study_u(u, which, band, p, component)
            study["label"] = recipe.label or f"u{index}"
            if dump_dir is not None:
                path = SpectralService.dump_singular_values(study["singular_values"],
                                                            Path(dump_dir) / f"singular_values_{index}.csv")
                study["dump"] = path.name
            logger.info(
                f"[SchattenStudy] {study['label']}: weak={study['weak']:.6g} rhs={study['rhs']:.6g} "
                f"ratio={study['ratio']} slope={study['tail_slope']}"
            )
            studies.append(study)

        rhs_values = [st["rhs"] for st in studies]
        positive = [r for r in rhs_values if r > 0]
        rhs_spread = max(positive) / min(positive) if positive else None
        if rhs_spread is not None and rhs_spread < RHS_SPREAD_MIN:
            logger.warning(f"[SchattenStudy] 右端范数跨度 {rhs_spread:.3g} 低于 {RHS_SPREAD_MIN:g} 倍, rhs_spread_min 门限将不通过")
        slopes = [st["tail_slope"] for st in studies if st["tail_slope"] is not None]

        extras = [
            {
                "label": st["label"],
                "tail_slope": st["tail_slope"],
                "exact_zero": st["exact_zero"],
                "truncation_error": st["truncation_error"],
            }
            for st in studies
        ]
        summary = summarize_series(rhs_values, [st["weak"] for st in studies], rhs_values, extras)
        fit = summary["fit"]
        return ExperimentRecord(
            experiment="schatten_study",
            variant=which,
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
                "tail_slope_min": min(slopes) if slopes else None,
                "tail_slope_max": max(slopes) if slopes else None,
                "rhs_spread": rhs_spread,
                "partial_sum_slack": min(st["partial_sum_slack"] for st in studies),
            },
            details={
                "band": band,
                "p": p,
                "component": component if which == "commutator" else None,
                "operator_size": studies[0]["size"],
                "expected_tail_slope": -1.0 / p,
                "dumps": [st.get("dump") for st in studies] if dump_dir is not None else None,
                "u": [
                    {
                        "label": st["label"],
                        "weak": st["weak"],
                        "rhs": st["rhs"],
                        "ratio": st["ratio"],
                        "tail_slope": st["tail_slope"],
                        "leading_singular_values": st["singular_values"][:8].tolist(),
                    }
                    for st in studies
                ],
            },
        )
