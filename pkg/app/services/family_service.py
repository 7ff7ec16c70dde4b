# services/family_service.py
"""
正交归一族生成器

- 平面波族: 纵向 (无旋) √2 k̂ cos/sin, 横向 (无散) √2 e cos/sin, e ⟂ k
- 半经典族: 球 0 < |k| <= radius 内全部格点模态 (每对 ±k 取一个代表)
- 随机族: 带限噪声 → 约束投影 → 修正 Gram-Schmidt
- Ḣ¹ 平面波族 (M 分量): ψ = e^{ik·x}/|k| · e_c
- (E_n, B_n) 成对族, 配对规则与单侧正交开关
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import BandLimitError, FamilyError
from app.models.base import GridFunction
from app.models.family import OrthonormalFamily, gram_matrix
from app.models.field import ScalarField, VectorField
from app.models.grid import Grid
from app.schemas.family import FamilyDescriptor, FamilyRecipe
from app.services.calculus_service import CalculusService
from app.services.experiment_support import STREAM_FAMILY, stream_rng
from app.services.field_service import FieldService

logger = logging.getLogger(__name__)

Polarization = Union[str, Sequence[Any]]


@dataclass
class OrthonormalityReport:
    """正交归一性复核结果"""
    inner: str
    deviation: float
    residuals: List[float]

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)


@dataclass
class FamilyPair:
    """
    成对族 (E_n), (B_n)

    某一侧不要求正交时, 该侧以首个成员重复 N 次 (归一但不正交)
    """
    e: OrthonormalFamily
    b: OrthonormalFamily
    e_orthogonal: bool = True
    b_orthogonal: bool = True

    @property
    def capacity(self) -> int:
        sizes = []
        if self.e_orthogonal:
            sizes.append(len(self.e))
        if self.b_orthogonal:
            sizes.append(len(self.b))
        return min(sizes)

    def members(self, count: int) -> Tuple[List[VectorField], List[VectorField]]:
        if count > self.capacity:
            raise FamilyError(f"族只有 {self.capacity} 个可用成员, 请求 {count}")
        e_list = self.e.members[:count] if self.e_orthogonal else [self.e[0]] * count
        b_list = self.b.members[:count] if self.b_orthogonal else [self.b[0]] * count
        return e_list, b_list


class FamilyService:
    """正交族的构造与复核"""

    # ------------------------------------------------------------------
    # 模态与极化
    # ------------------------------------------------------------------

    @staticmethod
    def validate_modes(grid: Grid, modes: Sequence[Sequence[int]]) -> np.ndarray:
        """模态须两两不同、非零、无 ±k 配对且严格位于 Nyquist 以下"""
        array = np.asarray(modes, dtype=np.int64)
        if array.ndim != 2 or array.shape[0] == 0 or array.shape[1] != grid.dim:
            raise FamilyError(f"模态列表须为非空的 (m, {grid.dim}) 整数数组, 收到形状 {array.shape}")
        seen = set()
        for k in array:
            key = tuple(int(v) for v in k)
            if not any(key):
                raise FamilyError("零模态不能作为族成员")
            if not grid.contains(key):
                raise BandLimitError(f"模态 {key} 超出网格 n={grid.n} 的 Nyquist 范围")
            if key in seen:
                raise FamilyError(f"重复模态 {key}")
            if tuple(-v for v in key) in seen:
                raise FamilyError(f"模态 {key} 与已有模态互为相反数 (实值配对已在内部处理)")
            seen.add(key)
        return array

    @staticmethod
    def is_canonical(k: Sequence[int]) -> bool:
        """首个非零坐标为正"""
        for v in k:
            if v != 0:
                return v > 0
        return False

    @staticmethod
    def transverse_basis(k: Sequence[float]) -> np.ndarray:
        """与 k 正交的 d−1 个单位向量 (标准基对 k̂ 做 Gram-Schmidt)"""
        k = np.asarray(k, dtype=float)
        dim = k.size
        basis = [k / np.linalg.norm(k)]
        for axis in range(dim):
            v = np.zeros(dim)
            v[axis] = 1.0
            for b in basis:
                v = v - np.dot(b, v) * b
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                basis.append(v / norm)
            if len(basis) == dim:
                break
        return np.asarray(basis[1:])

    @staticmethod
    def _resolve_polarizations(modes: np.ndarray, polarization: Polarization) -> List[np.ndarray]:
        """每个模态对应的一组单位极化向量"""
        resolved = []
        for idx, k in enumerate(modes):
            if polarization == "first":
                vectors = FamilyService.transverse_basis(k)[:1]
            elif polarization == "all":
                vectors = FamilyService.transverse_basis(k)
            elif isinstance(polarization, str):
                raise FamilyError(f"未知极化规则: {polarization}")
            else:
                entry = np.asarray(polarization[idx], dtype=float)
                vectors = entry.reshape(-1, modes.shape[1])
            k_hat = k / np.linalg.norm(k)
            units = []
            for e in vectors:
                norm = np.linalg.norm(e)
                if norm == 0:
                    raise FamilyError(f"模态 {k.tolist()} 的极化向量为零")
                e = e / norm
                if abs(np.dot(e, k_hat)) > 1e-12:
                    raise FamilyError(f"极化 {e.tolist()} 与模态 {k.tolist()} 不正交")
                units.append(e)
            resolved.append(np.asarray(units))
        return resolved

    @staticmethod
    def _cos_sin_members(grid: Grid, k: np.ndarray, direction: Optional[np.ndarray]) -> List[GridFunction]:
        phase = np.tensordot(k.astype(float), grid.points, axes=(0, 0))
        cos, sin = np.sqrt(2.0) * np.cos(phase), np.sqrt(2.0) * np.sin(phase)
        if direction is None:
            return [ScalarField(grid, cos), ScalarField(grid, sin)]
        shape = (-1,) + (1,) * grid.dim
        e = direction.reshape(shape)
        return [VectorField(grid, e * cos[None]), VectorField(grid, e * sin[None])]

    @staticmethod
    def _check_cap(count: int) -> None:
        cap = get_settings().FAMILY_MEMBER_CAP
        if count > cap:
            raise FamilyError(f"族成员数 {count} 超过上限 FAMILY_MEMBER_CAP={cap}")

    # ------------------------------------------------------------------
    # 平面波族
    # ------------------------------------------------------------------

    @staticmethod
    def mode_family_curl_free(grid: Grid, modes: Sequence[Sequence[int]]) -> OrthonormalFamily:
        """每个模态两个成员 √2 k̂ cos(k·x), √2 k̂ sin(k·x)"""
        array = FamilyService.validate_modes(grid, modes)
        FamilyService._check_cap(2 * len(array))
        members, member_modes = [], []
        for k in array:
            members.extend(FamilyService._cos_sin_members(grid, k, k / np.linalg.norm(k)))
            member_modes.extend([k, k])
        descriptor = FamilyDescriptor(recipe="mode_curl_free", params={"modes": array.tolist()})
        return OrthonormalFamily(grid, "curl_free", members, descriptor, np.asarray(member_modes))

    @staticmethod
    def mode_family_div_free(grid: Grid, modes: Sequence[Sequence[int]],
                             polarization: Polarization = "first") -> OrthonormalFamily:
        """
        横向平面波族

        Args:
            polarization: "first" (第一个横向基向量), "all" (全部 d−1 个),
                或逐模态显式给出的极化向量 (每项一个向量或向量列表)
        """
        array = FamilyService.validate_modes(grid, modes)
        resolved = FamilyService._resolve_polarizations(array, polarization)
        FamilyService._check_cap(2 * sum(len(v) for v in resolved))
        members, member_modes = [], []
        for k, vectors in zip(array, resolved):
            for e in vectors:
                members.extend(FamilyService._cos_sin_members(grid, k, e))
                member_modes.extend([k, k])
        params: Dict[str, Any] = {"modes": array.tolist()}
        params["polarization"] = polarization if isinstance(polarization, str) else [v.tolist() for v in resolved]
        descriptor = FamilyDescriptor(recipe="mode_div_free", params=params)
        return OrthonormalFamily(grid, "div_free", members, descriptor, np.asarray(member_modes))

    @staticmethod
    def semiclassical_modes(grid: Grid, radius: float) -> np.ndarray:
        """0 < |k| <= radius 的代表模态, 按 (|k|^2, 字典序) 排序"""
        if radius < 1:
            raise FamilyError(f"radius={radius} < 1, 族为空")
        if radius >= grid.nyquist:
            raise BandLimitError(f"radius={radius} 须小于 n/2={grid.nyquist}")
        lattice = grid.banded_lattice(radius)
        keep = np.array([FamilyService.is_canonical(k) for k in lattice], dtype=bool)
        return lattice[keep]

    @staticmethod
    def radius_for_count(grid: Grid, count: int, canonical: bool = True) -> float:
        """
        至少包含 count 个模态的最小半径 (>= 1)

        Args:
            canonical: True 时只数 ±k 的代表 (半经典族), 否则数全部格点 (Ḣ¹ 平面波族)
        """
        lattice = grid.banded_lattice(grid.nyquist - 0.5)
        if canonical:
            lattice = lattice[np.array([FamilyService.is_canonical(k) for k in lattice], dtype=bool)]
        if count < 1 or count > len(lattice):
            raise FamilyError(f"网格 n={grid.n} 带内只有 {len(lattice)} 个模态, 请求 {count}")
        return max(1.0, float(np.linalg.norm(lattice[count - 1])))

    @staticmethod
    def semiclassical_family(grid: Grid, radius: float, kind: str = "curl_free",
                             polarization: str = "first") -> OrthonormalFamily:
        """球内全部模态的纵向 / 横向 / 标量平面波族"""
        modes = FamilyService.semiclassical_modes(grid, radius)
        if kind == "curl_free":
            family = FamilyService.mode_family_curl_free(grid, modes)
        elif kind == "div_free":
            family = FamilyService.mode_family_div_free(grid, modes, polarization)
        elif kind == "scalar_l2":
            FamilyService._check_cap(2 * len(modes))
            members, member_modes = [], []
            for k in modes:
                members.extend(FamilyService._cos_sin_members(grid, k, None))
                member_modes.extend([k, k])
            family = OrthonormalFamily(grid, "scalar_l2", members,
                                       FamilyDescriptor(recipe="semiclassical"), np.asarray(member_modes))
        else:
            raise FamilyError(f"semiclassical 不支持族类型 {kind}")
        family.descriptor = FamilyDescriptor(
            recipe="semiclassical", params={"radius": radius, "kind": kind, "polarization": polarization},
        )
        logger.info(f"[FamilyService] 半经典族 kind={kind} radius={radius}: {len(modes)} 个模态, {len(family)} 个成员")
        return family

    @staticmethod
    def plane_wave_h1_family(grid: Grid, radius: float, components: int = 1) -> OrthonormalFamily:
        """
        Ḣ¹ 正交归一的 C^M 值平面波族 ψ = e^{ik·x}/|k| · e_c

        模态取 0 < |k| <= radius 的全部格点 (含 ±k), 每个模态依次配 M 个分量方向
        """
        if components < 1:
            raise FamilyError(f"components 必须 >= 1, 收到 {components}")
        if radius < 1:
            raise FamilyError(f"radius={radius} < 1, 族为空")
        if radius >= grid.nyquist:
            raise BandLimitError(f"radius={radius} 须小于 n/2={grid.nyquist}")
        modes = grid.banded_lattice(radius)
        FamilyService._check_cap(len(modes) * components)
        members, member_modes = [], []
        for k in modes:
            wave = grid.plane_wave(k) / np.linalg.norm(k)
            for c in range(components):
                values = np.zeros((components,) + grid.shape, dtype=np.complex128)
                values[c] = wave
                members.append(VectorField(grid, values))
                member_modes.append(k)
        descriptor = FamilyDescriptor(recipe="plane_wave_h1", params={"radius": radius, "components": components})
        return OrthonormalFamily(grid, "vector_h1", members, descriptor, np.asarray(member_modes))

    # ------------------------------------------------------------------
    # 随机族
    # ------------------------------------------------------------------

    @staticmethod
    def subspace_dimension(grid: Grid, kind: str, band: float) -> int:
        """带限 (非零、非 Nyquist) 实值约束子空间的维数"""
        lattice_count = len(grid.banded_lattice(band))
        if kind == "div_free":
            return lattice_count * (grid.dim - 1)
        return lattice_count

    @staticmethod
    def _random_draw(grid: Grid, kind: str, band: float, rng: np.random.Generator) -> GridFunction:
        if kind in ("scalar_l2", "scalar_h1"):
            return FieldService.remove_mean(FieldService.random_real(grid, rng, band))
        F = FieldService.remove_mean(FieldService.random_real(grid, rng, band, components=grid.dim))
        projected = CalculusService.leray_project(F)
        if kind == "div_free":
            return projected
        if kind == "curl_free":
            return F - projected
        raise FamilyError(f"随机族不支持族类型 {kind}")

    @staticmethod
    def orthonormalize(grid: Grid, fields: Sequence[GridFunction], inner: str = "l2") -> List[GridFunction]:
        """
        修正 Gram-Schmidt (频谱侧), 首轮偏差超过门限时整体再做一轮

        Raises:
            FamilyError: 投影后出现秩亏
        """
        tol = get_settings().ORTHONORMAL_TOL
        if not fields:
            return []
        template = fields[0]
        count = template.values.size // grid.size
        weight = np.tile(grid.k_norm.reshape(-1), count) if inner == "h1" else np.ones(template.values.size)
        rows = [f.spectrum.reshape(-1) * weight for f in fields]

        def sweep(vectors: List[np.ndarray]) -> List[np.ndarray]:
            basis: List[np.ndarray] = []
            for idx, v in enumerate(vectors):
                original = np.linalg.norm(v)
                for q in basis:
                    v = v - np.vdot(q, v) * q
                norm = np.linalg.norm(v)
                if original == 0 or norm <= 1e-10 * original:
                    raise FamilyError(f"第 {idx} 个成员投影后秩亏 (剩余范数 {norm:.3e})")
                basis.append(v / norm)
            return basis

        basis = sweep(rows)
        stacked = np.stack(basis)
        gram = stacked @ stacked.conj().T
        deviation = float(np.max(np.abs(gram - np.eye(len(basis)))))
        if deviation > tol:
            logger.debug(f"[FamilyService] 首轮正交化偏差 {deviation:.3e}, 再正交化一轮")
            basis = sweep(basis)

        inverse = np.zeros_like(weight)
        inverse[weight > 0] = 1.0 / weight[weight > 0]
        cls = type(template)
        is_real = all(f.max_imag <= 1e-12 for f in fields)
        members = []
        for b in basis:
            spectrum = (b * inverse).reshape(template.values.shape)
            field = cls.from_spectrum(grid, spectrum)
            members.append(cls(grid, field.values.real) if is_real else field)
        return members

    @staticmethod
    def random_orthonormal_family(grid: Grid, kind: str, count: int, band: float, seed: int) -> OrthonormalFamily:
        """带限随机约束场经正交化得到的族, 对 seed 确定"""
        if count < 1:
            raise FamilyError(f"count 必须 >= 1, 收到 {count}")
        if band >= grid.nyquist:
            raise BandLimitError(f"band={band} 须小于 n/2={grid.nyquist}")
        dimension = FamilyService.subspace_dimension(grid, kind, band)
        if count > dimension:
            raise FamilyError(f"count={count} 超过带限约束子空间维数 {dimension}")
        FamilyService._check_cap(count)
        rng = stream_rng(seed, STREAM_FAMILY)
        draws = [FamilyService._random_draw(grid, kind, band, rng) for _ in range(count)]
        inner = "h1" if kind == "scalar_h1" else "l2"
        members = FamilyService.orthonormalize(grid, draws, inner)
        descriptor = FamilyDescriptor(recipe="random", params={"kind": kind, "count": count, "band": band}, seed=seed)
        logger.info(f"[FamilyService] 随机族 kind={kind} count={count} band={band} seed={seed}")
        return OrthonormalFamily(grid, kind, members, descriptor)

    # ------------------------------------------------------------------
    # 复核与重建
    # ------------------------------------------------------------------

    @staticmethod
    def constraint_residual(kind: str, member: GridFunction) -> float:
        if kind == "curl_free":
            return CalculusService.curl_residual(member)
        if kind == "div_free":
            return CalculusService.divergence_residual(member)
        return float(np.max(np.abs(np.atleast_1d(member.mean))))

    @staticmethod
    def check_orthonormal(family: OrthonormalFamily, inner: Optional[str] = None) -> OrthonormalityReport:
        """
        在指定内积下重算 Gram 矩阵, 返回与单位阵的最大偏差和各成员约束残差

        Args:
            inner: "l2" 或 "h1"; 缺省取族自身的内积
        """
        inner = family.inner if inner is None else inner
        if inner not in ("l2", "h1"):
            raise ValueError(f"未知内积: {inner}")
        gram = family.gram if inner == family.inner else gram_matrix(family.grid, family.members, inner)
        deviation = float(np.max(np.abs(gram - np.eye(len(family))))) if len(family) else 0.0
        residuals = [FamilyService.constraint_residual(family.kind, f) for f in family.members]
        return OrthonormalityReport(inner=inner, deviation=deviation, residuals=residuals)

    @staticmethod
    def regenerate(grid: Grid, descriptor: FamilyDescriptor) -> OrthonormalFamily:
        """由描述重建族"""
        p = descriptor.params
        recipe = descriptor.recipe
        if recipe == "mode_curl_free":
            family = FamilyService.mode_family_curl_free(grid, p["modes"])
        elif recipe == "mode_div_free":
            family = FamilyService.mode_family_div_free(grid, p["modes"], p.get("polarization", "first"))
        elif recipe == "semiclassical":
            family = FamilyService.semiclassical_family(grid, p["radius"], p.get("kind", "curl_free"),
                                                        p.get("polarization", "first"))
        elif recipe == "random":
            family = FamilyService.random_orthonormal_family(grid, p["kind"], p["count"], p["band"], descriptor.seed)
        elif recipe == "plane_wave_h1":
            family = FamilyService.plane_wave_h1_family(grid, p["radius"], p.get("components", 1))
        else:
            raise FamilyError(f"未知生成器: {recipe}")
        if "prefix" in p:
            family = family.prefix(int(p["prefix"]))
        return family

    # ------------------------------------------------------------------
    # 成对族
    # ------------------------------------------------------------------

    @staticmethod
    def rotate_mode(k: Sequence[int]) -> np.ndarray:
        """
        带符号的循环移位 (k_1, ..., k_d) -> (−k_d, k_1, ..., k_{d−1})

        d = 2 即平面内转 90°; 任意 d 下没有非零不动模态, 且与取负交换, 代表模态的像两两不同 (模 ±)
        """
        k = np.asarray(k, dtype=np.int64)
        return np.concatenate([-k[-1:], k[:-1]])

    @staticmethod
    def rotated_polarizations(modes: np.ndarray) -> List[np.ndarray]:
        """k̂ 在旋转模态正交补上的归一投影; 投影退化时取第一个横向基向量"""
        polarizations = []
        for k in modes:
            p = FamilyService.rotate_mode(k).astype(float)
            p_hat = p / np.linalg.norm(p)
            k_hat = k / np.linalg.norm(k)
            e = k_hat - np.dot(k_hat, p_hat) * p_hat
            norm = np.linalg.norm(e)
            polarizations.append(e / norm if norm > 1e-8 else FamilyService.transverse_basis(p)[0])
        return polarizations

    @staticmethod
    def build_pair(grid: Grid, recipe: FamilyRecipe, seed: int) -> FamilyPair:
        """
        按配方构造 (E_n) 无旋族与 (B_n) 无散族

        rotate 配对: B 的模态为 E 的模态经 rotate_mode 的像, 极化取 k̂ 的投影, 使 E_n·B_n 非平凡;
        same 配对: 同一模态, B 取第一个横向极化 (平面波情形下 E_n·B_n ≡ 0)
        """
        if recipe.recipe == "random":
            family_seed = seed if recipe.seed is None else recipe.seed
            e = FamilyService.random_orthonormal_family(grid, "curl_free", recipe.count, recipe.band, family_seed)
            b = FamilyService.random_orthonormal_family(grid, "div_free", recipe.count, recipe.band, family_seed + 1)
            return FamilyPair(e, b, recipe.e_orthogonal, recipe.b_orthogonal)

        if recipe.recipe == "semiclassical":
            modes = FamilyService.semiclassical_modes(grid, recipe.radius)
        elif recipe.recipe == "modes":
            modes = FamilyService.validate_modes(grid, recipe.modes)
        else:
            raise FamilyError(f"成对实验不支持生成器 {recipe.recipe}")

        e = FamilyService.mode_family_curl_free(grid, modes)
        if recipe.pairing == "rotate":
            rotated = np.array([FamilyService.rotate_mode(k) for k in modes])
            b = FamilyService.mode_family_div_free(grid, rotated, FamilyService.rotated_polarizations(modes))
        else:
            b = FamilyService.mode_family_div_free(grid, modes, "first")
        logger.info(
            f"[FamilyService] 成对族 recipe={recipe.recipe} pairing={recipe.pairing} "
            f"modes={len(modes)} E正交={recipe.e_orthogonal} B正交={recipe.b_orthogonal}"
        )
        return FamilyPair(e, b, recipe.e_orthogonal, recipe.b_orthogonal)
