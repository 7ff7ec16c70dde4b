# services/identity_service.py
"""
恒等式套件 - 同一个积分 ∫ u Σ_n E_n·B_n 沿互相独立的代码路径计算

- 交换子配对: −Σ_j ⟨[R_j,u] f_n, B_{n,j}⟩, f_n = i(−Δ)^{1/2}φ_n (矩阵侧)
- 散度形式: −∫ φ_n ∇u·B_n (变换侧)
- 二形式: +∫ Σ_{j<k} (∂_j u E_k − ∂_k u E_j) α_{jk}, α 为 B 的二形式位势
- d = 3 楔积: ∫ ∇u·(E ∧ A), A 为向量位势
- 能量恒等式: Hodge 分解、二形式位势与向量位势的 Ḣ¹ 能量
- 不等式链: 逐点 Schwarz 与 Hölder 链的余量

失败只记录不抛出。
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.core.config import get_settings
from app.core.parallel import map_cells
from app.models.field import ScalarField, VectorField
from app.models.grid import Grid
from app.schemas.record import ExperimentRecord
from app.services.calculus_service import CalculusService
from app.services.experiment_support import STREAM_TRIALS, relative_deviation, stream_rng, summarize_series
from app.services.field_service import FieldService
from app.services.norm_service import NormService
from app.services.spectral_service import SpectralService

logger = logging.getLogger(__name__)

PAIRING_IDENTITIES = ("commutator", "divergence", "two_form", "wedge")


@dataclass
class IdentityCheck:
    """
    一条恒等式的两侧与相对偏差

    lhs / rhs / scale 为全部配对之和; pair_deviation 为逐对偏差的最大值,
    各对误差在求和中相互抵消时仍可见
    """
    lhs: complex
    rhs: complex
    scale: float
    pair_deviation: float = 0.0
    deviation: float = field(init=False)

    def __post_init__(self):
        self.deviation = relative_deviation(self.lhs, self.rhs, self.scale)

    @property
    def worst(self) -> float:
        return max(self.deviation, self.pair_deviation)


def _integral(f: ScalarField) -> complex:
    """归一化测度下的 ∫ f"""
    return complex(np.mean(f.values))


def _sup(f) -> float:
    return NormService.lp_norm(f, np.inf)


class IdentityService:
    """恒等式与不等式链检验"""

    @staticmethod
    def check_identities(u: ScalarField, e_list: Sequence[VectorField], b_list: Sequence[VectorField],
                         band: float) -> Dict[str, IdentityCheck]:
        """
        对一组 (u, E_n, B_n) 检验全部配对恒等式与能量恒等式

        Args:
            u: 实值带限标量场
            e_list: 无旋零均值向量场
            b_list: 无散零均值向量场 (与 e_list 等长)
            band: 算子带宽, 须覆盖 E、B 的频带且不小于 u 的频带

        Returns:
            恒等式名称 -> IdentityCheck
        """
        grid = u.grid
        dim = grid.dim
        grad_u = CalculusService.gradient(u)
        u_sup, grad_sup = _sup(u), _sup(grad_u)

        sums = {name: [0j, 0j, 0.0, 0.0] for name in PAIRING_IDENTITIES if name != "wedge" or dim == 3}
        blocks = [SpectralService.materialize_commutator(u, j, band) for j in range(dim)]
        modes = blocks[0].modes

        def accumulate(name: str, lhs: complex, rhs: complex, scale: float) -> None:
            sums[name][0] += lhs
            sums[name][1] += rhs
            sums[name][2] += scale
            sums[name][3] = max(sums[name][3], relative_deviation(lhs, rhs, scale))

        for E, B in zip(e_list, b_list):
            lhs = _integral(u * FieldService.pointwise_dot_sum([E], [B]))
            e_norm, b_norm = FieldService.norm(E), FieldService.norm(B)

            f = CalculusService.riesz_preimage(E)
            f_hat = SpectralService.coefficients(f, modes)
            pairing = sum(
                np.vdot(SpectralService.coefficients(B.component(j), modes), blocks[j] @ f_hat) for j in range(dim)
            )
            accumulate("commutator", lhs, -complex(pairing), u_sup * e_norm * b_norm)

            phi = CalculusService.scalar_potential(E)
            accumulate("divergence", lhs, -_integral(phi * FieldService.pointwise_dot_sum([grad_u], [B])),
                       grad_sup * FieldService.norm(phi) * b_norm)

            alpha = CalculusService.two_form_potential(B)
            wedge = CalculusService.wedge_gradient(u, E)
            accumulate("two_form", lhs, _integral(CalculusService.two_form_dot(wedge, alpha)),
                       grad_sup * e_norm * FieldService.norm(alpha))

            if dim == 3:
                A = CalculusService.vector_potential_3d(B)
                cross = CalculusService.cross_3d(E, A)
                accumulate("wedge", lhs, _integral(FieldService.pointwise_dot_sum([grad_u], [cross])),
                           grad_sup * e_norm * FieldService.norm(A))

        checks = {name: IdentityCheck(*values) for name, values in sums.items()}

        energy = {"hodge_energy": [0.0, 0.0, 0.0], "two_form_energy": [0.0, 0.0, 0.0]}
        if dim == 3:
            energy["vector_potential_energy"] = [0.0, 0.0, 0.0]

        def add_energy(name: str, lhs: float, rhs: float) -> None:
            energy[name][0] += lhs
            energy[name][1] += rhs
            energy[name][2] = max(energy[name][2], relative_deviation(lhs, rhs, max(abs(lhs), abs(rhs))))

        for E, B in zip(e_list, b_list):
            parts = CalculusService.hodge_energy(E + B)
            add_energy("hodge_energy", parts["gradient"], parts["curl"] + parts["divergence"])
            b_energy = FieldService.norm(B) ** 2
            add_energy("two_form_energy", CalculusService.gradient_energy(CalculusService.two_form_potential(B)),
                       b_energy)
            if dim == 3:
                add_energy("vector_potential_energy",
                           CalculusService.gradient_energy(CalculusService.vector_potential_3d(B)), b_energy)
        for name, (lhs, rhs, pair_deviation) in energy.items():
            checks[name] = IdentityCheck(lhs, rhs, max(abs(lhs), abs(rhs)), pair_deviation)
        return checks

    @staticmethod
    def inequality_chains(e_list: Sequence[VectorField], b_list: Sequence[VectorField]) -> Dict[str, float]:
        """
        逐点 Schwarz 违反量 (应 <= 0) 与 Hölder 链余量 rhs − lhs (应 >= 0);
        d = 3 时再加上 |E|·|A| 的链
        """
        dim = e_list[0].grid.dim
        phis = [CalculusService.scalar_potential(E) for E in e_list]
        chains = {"schwarz_violation": NormService.pointwise_schwarz_violation(phis, b_list)}
        slack = np.inf
        for phi, E, B in zip(phis, e_list, b_list):
            lhs, rhs = NormService.holder_chain(phi, B, dim)
            slack = min(slack, rhs - lhs)
            if dim == 3:
                A = CalculusService.vector_potential_3d(B)
                a_mag = ScalarField(B.grid, NormService.magnitude(A))
                lhs, rhs = NormService.holder_chain(a_mag, E, dim)
                slack = min(slack, rhs - lhs)
        chains["holder_slack"] = float(slack)
        return chains

    @staticmethod
    def draw_trial(grid: Grid, seed: int, trial: int, band: float, u_band: float,
                   pairs: int = 3) -> Dict[str, object]:
        """第 trial 次试验的随机 u 与约束场 (子流 STREAM_TRIALS + trial)"""
        rng = stream_rng(seed, STREAM_TRIALS + trial)
        u = FieldService.random_real(grid, rng, u_band)
        e_list, b_list = [], []
        for _ in range(pairs):
            phi = FieldService.remove_mean(FieldService.random_real(grid, rng, band))
            e_list.append(CalculusService.gradient(phi))
            raw = FieldService.remove_mean(FieldService.random_real(grid, rng, band, components=grid.dim))
            b_list.append(CalculusService.leray_project(raw))
        return {"u": u, "e_list": e_list, "b_list": b_list}

    @staticmethod
    def identity_suite(grid: Grid, seed: int, band: float, u_band: Optional[float] = None,
                       trials: int = 20, pairs: int = 3, jobs: int = 1) -> ExperimentRecord:
        """
        在 trials 组随机约束场上运行恒等式套件

        Args:
            grid: 网格; 需满足 u_band + 2·band < n 以保证乘积无混叠
            seed: 主种子
            band: 场与算子的带宽 (< n/2)
            u_band: u 的带宽, 缺省取 band/2, 不得超过 band
            trials: 试验次数
            pairs: 每次试验的 (E_n, B_n) 对数
            jobs: 并行线程数

        Returns:
            ExperimentRecord, metrics.max_deviation 为全部恒等式 (求和与逐对) 的最大相对偏差
        """
        u_band = max(1.0, band / 2.0) if u_band is None else u_band
        if u_band > band:
            raise ValueError(f"u_band={u_band} 不得超过 band={band}")
        if u_band + 2 * band >= grid.n:
            raise ValueError(f"需要 u_band + 2·band < n, 收到 {u_band} + 2·{band} >= {grid.n}")
        logger.info(f"[IdentitySuite] d={grid.dim} n={grid.n} band={band} u_band={u_band} trials={trials} seed={seed}")

        def run_trial(trial: int) -> Dict[str, object]:
            draw = IdentityService.draw_trial(grid, seed, trial, band, u_band, pairs)
            checks = IdentityService.check_identities(draw["u"], draw["e_list"], draw["b_list"], band)
            chains = IdentityService.inequality_chains(draw["e_list"], draw["b_list"])
            return {"checks": checks, "chains": chains}

        results = map_cells(run_trial, range(trials), jobs)

        tol = get_settings().IDENTITY_TOL
        per_identity: Dict[str, float] = {}
        trial_max: List[float] = []
        pair_max: List[float] = []
        extras: List[Dict[str, object]] = []
        for trial, result in enumerate(results):
            deviations = {name: check.worst for name, check in result["checks"].items()}
            pair_max.append(max(check.pair_deviation for check in result["checks"].values()))
            for name, value in deviations.items():
                per_identity[name] = max(per_identity.get(name, 0.0), value)
            trial_max.append(max(deviations.values()))
            extras.append({"worst": max(deviations, key=deviations.get), **result["chains"]})
            logger.debug(f"[IdentitySuite] trial={trial} max_deviation={trial_max[-1]:.3e}")

        failing = sorted(name for name, value in per_identity.items() if value > tol)
        if failing:
            logger.warning(f"[IdentitySuite] 偏差超过 {tol:.0e}: {failing}")
        schwarz = max(item["schwarz_violation"] for item in extras) if extras else None
        holder = min(item["holder_slack"] for item in extras) if extras else None

        summary = summarize_series(list(range(trials)), trial_max, extras=extras)
        return ExperimentRecord(
            experiment="identity_suite",
            dim=grid.dim,
            points_per_axis=grid.n,
            seed=seed,
            series=summary["series"],
            metrics={
                "max_deviation": max(trial_max) if trial_max else 0.0,
                "max_pair_deviation": max(pair_max) if pair_max else 0.0,
                "schwarz_violation": schwarz,
                "holder_slack": holder,
            },
            details={
                "band": band,
                "u_band": u_band,
                "trials": trials,
                "pairs": pairs,
                "deviation_by_identity": per_identity,
                "tolerance": tol,
                "failing": failing,
            },
        )
