# services/spectral_service.py
"""
谱算子服务 - Fourier 基下的稠密算子、奇异值与迹不等式、γ 矩阵

指标集: 0 < |k| <= band 的格点 (Grid.banded_lattice 顺序), band < n/2。
u 先截断到 |k| <= band, 截断误差随算子一起报告;
û(k − m) 在差频超出带宽时取 0, 因此矩阵元没有混叠。
"""
import logging
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.core.exceptions import BandLimitError, SpectralError
from app.models.field import ScalarField
from app.models.grid import Grid
from app.models.operator import CliffordAlgebra, DenseOperator
from app.schemas.record import ExperimentRecord
from app.services.experiment_support import STREAM_FIELDS, stream_rng, summarize_series
from app.services.field_service import FieldService
from app.services.norm_service import NormService

logger = logging.getLogger(__name__)

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    np.array([[1, 0], [0, -1]], dtype=np.complex128),
)


class SpectralService:
    """稠密算子组装与奇异值分析"""

    # ------------------------------------------------------------------
    # 组装
    # ------------------------------------------------------------------

    @staticmethod
    def operator_modes(grid: Grid, band: float) -> np.ndarray:
        if band >= grid.nyquist:
            raise BandLimitError(f"band={band} 须小于 n/2={grid.nyquist}")
        modes = grid.banded_lattice(band)
        if len(modes) == 0:
            raise BandLimitError(f"band={band} 内没有非零格点")
        return modes

    @staticmethod
    def coefficients(f: ScalarField, modes: np.ndarray) -> np.ndarray:
        """f̂ 在给定频率上的取值"""
        index = tuple((modes % f.grid.n).T)
        return f.spectrum[index]

    @staticmethod
    def _difference_coefficients(u: ScalarField, modes: np.ndarray, band: float) -> Tuple[np.ndarray, float]:
        """矩阵 û(k − m) (k 为行, m 为列) 与 u 的截断相对误差"""
        truncated = FieldService.band_limit(u, band)
        norm = FieldService.norm(u)
        truncation = FieldService.norm(u - truncated) / norm if norm > 0 else 0.0
        if truncation > 1e-12:
            logger.warning(f"[SpectralService] u 截断到 |k| <= {band}, 相对误差 {truncation:.3e}")
        diff = modes[:, None, :] - modes[None, :, :]
        inside = np.sum(diff ** 2, axis=-1) <= band ** 2 + 1e-9
        index = tuple(np.moveaxis(diff % u.grid.n, -1, 0))
        return np.where(inside, truncated.spectrum[index], 0.0), truncation

    @staticmethod
    def materialize_commutator(u: ScalarField, j: int, band: float) -> DenseOperator:
        """
        [R_j, u] 在带内的矩阵: 元素 (k, m) = (k_j/|k| − m_j/|m|) û(k − m)

        Args:
            u: 乘子函数
            j: Riesz 分量下标 (0 起)
            band: 指标集带宽, 须小于 n/2
        """
        if not 0 <= j < u.grid.dim:
            raise ValueError(f"分量下标 j={j} 超出 [0, {u.grid.dim})")
        modes = SpectralService.operator_modes(u.grid, band)
        coeffs, truncation = SpectralService._difference_coefficients(u, modes, band)
        symbol = modes[:, j] / np.linalg.norm(modes, axis=1)
        matrix = (symbol[:, None] - symbol[None, :]) * coeffs
        return DenseOperator(matrix, u.grid, band, modes, truncation_error=truncation, label=f"[R_{j},u]")

    @staticmethod
    def materialize_cwikel(u: ScalarField, band: float) -> DenseOperator:
        """u(−Δ)^{−1/2} 在带内的矩阵: 元素 (k, m) = û(k − m)/|m|"""
        modes = SpectralService.operator_modes(u.grid, band)
        coeffs, truncation = SpectralService._difference_coefficients(u, modes, band)
        matrix = coeffs / np.linalg.norm(modes, axis=1)[None, :]
        return DenseOperator(matrix, u.grid, band, modes, truncation_error=truncation, label="u(-Δ)^{-1/2}")

    @staticmethod
    def tensor_identity(K: DenseOperator, components: int) -> DenseOperator:
        """K ⊗ 1_{C^M}"""
        if components < 1:
            raise ValueError(f"components 必须 >= 1, 收到 {components}")
        matrix = np.kron(K.matrix, np.eye(components))
        return DenseOperator(matrix, K.grid, K.band, K.modes, K.components * components,
                             K.truncation_error, f"{K.label}⊗1_{components}")

    # ------------------------------------------------------------------
    # 奇异值与迹不等式
    # ------------------------------------------------------------------

    @staticmethod
    def singular_values(K: Union[DenseOperator, np.ndarray]) -> np.ndarray:
        if not isinstance(K, DenseOperator):
            K = DenseOperator(K)
        return K.singular_values

    @staticmethod
    def _require_orthonormal(vectors: np.ndarray, label: str, tol: float = 1e-10) -> None:
        gram = vectors.conj().T @ vectors
        deviation = float(np.max(np.abs(gram - np.eye(gram.shape[0])))) if gram.size else 0.0
        if deviation > tol:
            raise SpectralError(f"{label} 不是正交归一组 (Gram 偏差 {deviation:.3e})")

    @staticmethod
    def trace_pairing_bound(K: Union[DenseOperator, np.ndarray], X: np.ndarray, Y: np.ndarray) -> Tuple[float, float]:
        """
        Σ_{n<=N} |⟨x_n, K y_n⟩| 与 Σ_{n<=N} s_n(K)

        Args:
            X: 列为 x_n 的矩阵 (rows × N)
            Y: 列为 y_n 的矩阵 (cols × N)

        Returns:
            (lhs, rhs)
        """
        if not isinstance(K, DenseOperator):
            K = DenseOperator(K)
        X = np.asarray(X, dtype=np.complex128)
        Y = np.asarray(Y, dtype=np.complex128)
        if X.shape[1] != Y.shape[1]:
            raise SpectralError(f"X 与 Y 的向量个数不一致: {X.shape[1]} vs {Y.shape[1]}")
        count = X.shape[1]
        if count > min(K.shape) or X.shape[0] != K.shape[0] or Y.shape[0] != K.shape[1]:
            raise SpectralError(f"X {X.shape}, Y {Y.shape} 与算子形状 {K.shape} 不匹配")
        SpectralService._require_orthonormal(X, "X")
        SpectralService._require_orthonormal(Y, "Y")
        pairings = np.einsum("in,in->n", X.conj(), K.matrix @ Y)
        lhs = float(np.sum(np.abs(pairings)))
        rhs = float(np.sum(K.singular_values[:count]))
        return lhs, rhs

    @staticmethod
    def partial_sum_bound(s: Sequence[float], p: float, N: int) -> Tuple[float, float]:
        """(Σ_{n<=N} s_n, (p/(p−1))‖s‖_{weak p} N^{1−1/p})"""
        if p <= 1:
            raise ValueError(f"partial_sum_bound 需要 p > 1, 收到 {p}")
        values = np.asarray(s, dtype=float)
        if N > values.size:
            raise ValueError(f"N={N} 超过奇异值个数 {values.size}")
        total = float(np.sum(values[:N]))
        cap = p / (p - 1.0) * NormService.weak_lp_functional(values, p) * N ** (1.0 - 1.0 / p)
        return total, float(cap)

    @staticmethod
    def partial_square_sum_bound(s: Sequence[float], p: float, N: int) -> Tuple[float, float]:
        """(Σ_{n<=N} s_n^2, (p/(p−2))‖s‖_{weak p}^2 N^{1−2/p}), p > 2"""
        if p <= 2:
            raise ValueError(f"partial_square_sum_bound 需要 p > 2, 收到 {p}")
        values = np.asarray(s, dtype=float)
        if N > values.size:
            raise ValueError(f"N={N} 超过奇异值个数 {values.size}")
        total = float(np.sum(values[:N] ** 2))
        cap = p / (p - 2.0) * NormService.weak_lp_functional(values, p) ** 2 * N ** (1.0 - 2.0 / p)
        return total, float(cap)

    @staticmethod
    def dump_singular_values(s: Sequence[float], path: Union[str, Path]) -> Path:
        """奇异值写成 CSV (列 n, s_n)"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame({"n": np.arange(1, len(s) + 1), "s_n": np.asarray(s, dtype=float)})
        frame.to_csv(path, index=False, float_format="%.15e", lineterminator="\n")
        return path

    # ------------------------------------------------------------------
    # Clifford 代数
    # ------------------------------------------------------------------

    @staticmethod
    def clifford_generators(d: int) -> CliffordAlgebra:
        """
        递归张量积构造: 从 (σ_1, σ_2) 出发每次增加两维,
        奇数维再补上 i^{(d−1)/2} γ_1⋯γ_{d−1}
        """
        if not 2 <= d <= 8:
            raise ValueError(f"clifford_generators 支持 2 <= d <= 8, 收到 {d}")
        s1, s2, s3 = _PAULI
        gammas = [s1, s2]
        current = 2
        while current + 1 < d:
            eye = np.eye(gammas[0].shape[0])
            gammas = [np.kron(s1, g) for g in gammas] + [np.kron(s2, eye), np.kron(s3, eye)]
            current += 2
        if current < d:
            last = (1j) ** ((d - 1) // 2) * gammas[0]
            for g in gammas[1:]:
                last = last @ g
            gammas.append(last)
        return CliffordAlgebra(dim=d, gammas=np.stack(gammas))

    @staticmethod
    def clifford_commutator_recovery(u: ScalarField, j: int, band: float) -> Tuple[np.ndarray, np.ndarray, float]:
        """
        由 [γ·R, u] = Σ_l γ_l ⊗ [R_l, u] 还原 [R_j, u]:
        ½([γ·R, u] γ_j + γ_j [γ·R, u]) 与 [R_j, u] ⊗ 1 比较

        Returns:
            (lhs = [R_j,u] ⊗ 1, rhs, 最大逐项偏差)
        """
        dim = u.grid.dim
        algebra = SpectralService.clifford_generators(dim)
        blocks = [SpectralService.materialize_commutator(u, l, band).matrix for l in range(dim)]
        gamma_commutator = sum(np.kron(blocks[l], algebra.gammas[l]) for l in range(dim))
        gamma_j = np.kron(np.eye(blocks[0].shape[0]), algebra.gammas[j])
        rhs = 0.5 * (gamma_commutator @ gamma_j + gamma_j @ gamma_commutator)
        lhs = np.kron(blocks[j], np.eye(algebra.size))
        deviation = float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0
        return lhs, rhs, deviation

    # ------------------------------------------------------------------
    # 随机检验套件
    # ------------------------------------------------------------------

    @staticmethod
    def _random_isometry(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
        gaussian = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
        q, r = np.linalg.qr(gaussian)
        return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]

    @staticmethod
    def spectral_suite(grid: Grid, seed: int, band: float, trials: int = 100, max_size: int = 64,
                       clifford_dims: Sequence[int] = (2, 3, 4, 5, 6)) -> ExperimentRecord:
        """
        迹不等式、部分和界与 Clifford 关系的随机检验

        - trials 个随机 (K, X, Y), 边长不超过 max_size: 记录 Σ s_n − Σ|⟨x_n,Ky_n⟩| 的最小值,
          以及在奇异向量基上等号的偏差
        - 每个 K 的谱上, p ∈ {d, 3/2, 2} 的部分和界余量
        - clifford_dims 中各维的反交换关系, 以及网格维数上的交换子还原 (随机 u, 带宽 band)
        """
        rng = stream_rng(seed, STREAM_FIELDS)
        exponents = sorted({float(grid.dim), 1.5, 2.0})
        trace_slack, equality_deviation, partial_slack = np.inf, 0.0, np.inf
        controls, gaps = [], []
        for trial in range(trials):
            rows, cols = (int(v) for v in rng.integers(2, max_size + 1, size=2))
            count = int(rng.integers(1, min(rows, cols) + 1))
            K = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
            X = SpectralService._random_isometry(rng, rows, count)
            Y = SpectralService._random_isometry(rng, cols, count)
            lhs, rhs = SpectralService.trace_pairing_bound(K, X, Y)
            trace_slack = min(trace_slack, rhs - lhs)
            controls.append(float(trial + 1))
            gaps.append(rhs - lhs)

            U, s, Vh = np.linalg.svd(K)
            lhs, rhs = SpectralService.trace_pairing_bound(K, U[:, :count], Vh.conj().T[:, :count])
            equality_deviation = max(equality_deviation, abs(rhs - lhs) / max(rhs, 1.0))
            for p in exponents:
                for N in range(1, len(s) + 1):
                    total, cap = SpectralService.partial_sum_bound(s, p, N)
                    partial_slack = min(partial_slack, cap - total)

        anticommutation = {}
        for d in clifford_dims:
            anticommutation[str(d)] = SpectralService.clifford_generators(d).check()["anticommutation"]

        u = FieldService.remove_mean(FieldService.random_real(grid, rng, band))
        _, _, recovery = SpectralService.clifford_commutator_recovery(u, 0, band)

        violations = max(0.0, -trace_slack) + max(0.0, -partial_slack)
        max_deviation = max([equality_deviation, recovery, violations, *anticommutation.values()])
        logger.info(
            f"[SpectralSuite] trace_slack={trace_slack:.3e} equality={equality_deviation:.3e} "
            f"partial_slack={partial_slack:.3e} recovery={recovery:.3e}"
        )
        summary = summarize_series(controls, gaps)
        return ExperimentRecord(
            experiment="spectral_suite",
            dim=grid.dim,
            points_per_axis=grid.n,
            seed=seed,
            series=summary["series"],
            metrics={
                "max_deviation": max_deviation,
                "trace_slack": float(trace_slack),
                "partial_sum_slack": float(partial_slack),
            },
            details={
                "trials": trials,
                "max_size": max_size,
                "band": band,
                "exponents": exponents,
                "equality_deviation": equality_deviation,
                "anticommutation": anticommutation,
                "commutator_recovery": recovery,
            },
        )
