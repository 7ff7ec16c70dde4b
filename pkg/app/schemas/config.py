"""
运行配置 (TOML) 的严格 schema

每一层都禁止未知键; 跨字段规则在 RunConfig 的 model_validator 中一次性收集,
parse_config 把 pydantic 的全部错误展开成带键路径的违规列表。
"""
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.exceptions import ConfigError
from app.schemas.family import FamilyRecipe
from app.schemas.weights import SequenceWeights

EXPERIMENTS = ("identity_suite", "scaling_study", "schatten_study", "extremizer_search", "spectral_suite")
ScalingVariant = Literal["main", "triangle", "lorentz", "interpolated", "liebsob"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ExperimentSection(_Section):
    """[experiment]"""
    name: str = Field(..., description="实验名称")
    variant: Optional[ScalingVariant] = Field(None, description="scaling_study 的变体")
    seed: int = Field(0, ge=0, description="主种子")
    output_dir: Optional[str] = Field(None, description="输出目录 (命令行 --out 优先)")


class GridSection(_Section):
    """[grid]"""
    dim: int = Field(..., description="维数 d >= 2")
    points_per_axis: int = Field(..., description="每轴点数 n (偶数, >= 4)")
    band: Optional[float] = Field(None, gt=0, description="算子 / 场带宽, < n/2")

    @field_validator("dim")
    @classmethod
    def check_dim(cls, value: int) -> int:
        if value < 2:
            raise ValueError(f"需要 d >= 2, 收到 d = {value}")
        return value

    @field_validator("points_per_axis")
    @classmethod
    def check_points(cls, value: int) -> int:
        if value < 4 or value % 2:
            raise ValueError(f"n 必须为 >= 4 的偶数, 收到 {value}")
        return value


class NormSection(_Section):
    """[norm]"""
    s: Optional[float] = Field(None, gt=0, description="负阶 Sobolev 的阶 (interpolated 缺省 d/q')")
    q: Optional[float] = Field(None, gt=1, description="范数指数 q")
    p: Optional[float] = Field(None, gt=0, description="弱 Schatten 指数 p")
    N_list: Optional[List[int]] = Field(None, description="严格递增的 N 序列")
    components: Optional[List[int]] = Field(None, description="liebsob 的分量数 M 列表")
    triangle_norm: Literal["l1", "neg_sobolev"] = Field("l1", description="triangle 变体的逐项范数")
    certify_steps: Optional[int] = Field(None, ge=1, description="对偶下界上升步数")
    certify_step_size: Optional[float] = Field(None, gt=0, description="对偶下界上升初始步长")

    @field_validator("N_list")
    @classmethod
    def check_n_list(cls, values: Optional[List[int]]) -> Optional[List[int]]:
        if values is None:
            return values
        if not values or values[0] < 1 or any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError(f"N_list 必须为严格递增的正整数, 收到 {values}")
        return values

    @field_validator("components")
    @classmethod
    def check_components(cls, values: Optional[List[int]]) -> Optional[List[int]]:
        if values is not None and (not values or min(values) < 1):
            raise ValueError(f"components 必须为非空正整数列表, 收到 {values}")
        return values


class WeightsSection(_Section):
    """[weights] 显式 values, 或 λ_n = n^{−power} (n <= length)"""
    values: Optional[List[float]] = Field(None, description="显式系数")
    power: Optional[float] = Field(None, ge=0, description="幂律指数")
    length: Optional[int] = Field(None, ge=1, description="幂律长度")

    @model_validator(mode="after")
    def check_source(self) -> "WeightsSection":
        if (self.values is None) == (self.power is None):
            raise ValueError("weights 需要且只能给出 values 或 power + length 之一")
        if self.power is not None and self.length is None:
            raise ValueError("power 需要同时给出 length")
        if self.values is not None:
            SequenceWeights(values=self.values)
        return self

    def build(self) -> SequenceWeights:
        if self.values is not None:
            return SequenceWeights(values=self.values)
        return SequenceWeights.power_law(self.power, self.length)


class URecipe(_Section):
    """[[schatten.u]] 乘子函数 u 的生成配方"""
    kind: Literal["mode", "random"] = Field(..., description="mode: 模态叠加; random: 带限随机")
    modes: Optional[List[List[int]]] = Field(None, description="mode 配方的模态列表")
    phase: Literal["cos", "sin", "exp"] = Field("cos", description="每个模态的相位形式")
    amplitude: float = Field(1.0, description="整体幅度")
    band: Optional[float] = Field(None, gt=0, description="random 配方的频带半径")
    seed: Optional[int] = Field(None, ge=0, description="random 配方的种子 (缺省由主种子派生)")
    label: Optional[str] = Field(None, description="记录中的标签")

    @model_validator(mode="after")
    def check_kind(self) -> "URecipe":
        if self.kind == "mode" and not self.modes:
            raise ValueError("mode 配方需要非空 modes")
        if self.kind == "random" and self.band is None:
            raise ValueError("random 配方需要 band")
        return self


class SchattenSection(_Section):
    """[schatten]"""
    which: Literal["commutator", "cwikel"] = Field(..., description="commutator: [R_j,u]; cwikel: u(−Δ)^{−1/2}")
    component: int = Field(0, ge=0, description="Riesz 分量下标 j")
    p: Optional[float] = Field(None, gt=1, description="弱 Schatten 指数, 缺省 d")
    dump_singular_values: bool = Field(False, description="是否把每个 u 的奇异值写成 CSV")
    u: List[URecipe] = Field(..., description="u 配方列表")


class IdentitySection(_Section):
    """[identity]"""
    trials: int = Field(20, ge=1, le=899, description="随机试验次数")
    pairs: int = Field(3, ge=1, description="每次试验的 (E_n, B_n) 对数")
    u_band: Optional[float] = Field(None, gt=0, description="u 的带宽, 缺省 band/2")


class ExtremizerSection(_Section):
    """[extremizer]"""
    N: int = Field(..., ge=1, description="族的成员数 N")
    pool_modes: int = Field(..., ge=1, description="模态池大小 (每个模态贡献 cos / sin 两个成员)")
    steps: int = Field(..., ge=0, description="上升步数")
    step_size: float = Field(0.1, gt=0, description="初始步长")


class SpectralSection(_Section):
    """[spectral] 迹不等式、部分和界与 Clifford 关系的随机检验"""
    trials: int = Field(100, ge=1, description="随机 (K, X, Y) 三元组个数")
    max_size: int = Field(64, ge=2, description="随机矩阵的最大边长")
    clifford_dims: List[int] = Field([2, 3, 4, 5, 6], description="检验反对易关系的维数")


class GatesSection(_Section):
    """[gates] 未给出的门限不参与判定"""
    exponent_max: Optional[float] = None
    exponent_min: Optional[float] = None
    ratio_spread_max: Optional[float] = None
    deviation_max: Optional[float] = None
    slope_min: Optional[float] = None
    slope_max: Optional[float] = None
    rhs_spread_min: Optional[float] = None
    component_ratio_max: Optional[float] = None


class RunConfig(_Section):
    """一次运行的完整配置"""
    experiment: ExperimentSection
    grid: GridSection
    family: Optional[FamilyRecipe] = None
    norm: Optional[NormSection] = None
    weights: Optional[WeightsSection] = None
    schatten: Optional[SchattenSection] = None
    identity: Optional[IdentitySection] = None
    extremizer: Optional[ExtremizerSection] = None
    spectral: Optional[SpectralSection] = None
    gates: GatesSection = Field(default_factory=GatesSection)

    @model_validator(mode="after")
    def check_cross_fields(self) -> "RunConfig":
        violations = self.cross_field_violations()
        if violations:
            raise ConfigError(violations)
        return self

    def cross_field_violations(self) -> List[str]:
        """按实验名称检查必需段与跨字段约束, 返回全部违规项"""
        name = self.experiment.name
        d, n, band = self.grid.dim, self.grid.points_per_axis, self.grid.band
        violations: List[str] = []
        if name not in EXPERIMENTS:
            violations.append(f"experiment.name: 未知实验 {name}, 可选 {list(EXPERIMENTS)}")
            return violations
        if band is not None and band >= n / 2:
            violations.append(f"grid.band: 需要 band < n/2 = {n / 2}, 收到 {band}")

        if name == "identity_suite":
            if band is None:
                violations.append("grid.band: identity_suite 需要显式 band")
            else:
                u_band = self.identity.u_band if self.identity and self.identity.u_band else max(1.0, band / 2)
                if u_band > band:
                    violations.append(f"identity.u_band: 不得超过 grid.band = {band}")
                if u_band + 2 * band >= n:
                    violations.append(f"identity.u_band: 需要 u_band + 2·band < n = {n}")

        elif name == "scaling_study":
            violations.extend(self._scaling_violations())

        elif name == "schatten_study":
            if band is None:
                violations.append("grid.band: schatten_study 需要显式 band")
            if self.schatten is None:
                violations.append("schatten: schatten_study 需要 [schatten] 段")
            else:
                if self.schatten.which == "cwikel" and d < 3:
                    violations.append(f"schatten.which: cwikel 需要 d >= 3, 当前 d = {d}")
                if self.schatten.component >= d:
                    violations.append(f"schatten.component: 需要 < d = {d}")
                if not self.schatten.u:
                    violations.append("schatten.u: 至少需要一个 u 配方")
                for i, recipe in enumerate(self.schatten.u):
                    for k in recipe.modes or []:
                        if len(k) != d:
                            violations.append(f"schatten.u.{i}.modes: 模态 {k} 的长度不是 d = {d}")

        elif name == "spectral_suite":
            if band is None:
                violations.append("grid.band: spectral_suite 需要显式 band")
            dims = self.spectral.clifford_dims if self.spectral else []
            if any(not 2 <= k <= 8 for k in dims):
                violations.append(f"spectral.clifford_dims: 只支持 2..8, 收到 {dims}")

        elif name == "extremizer_search":
            if self.extremizer is None:
                violations.append("extremizer: extremizer_search 需要 [extremizer] 段")
            elif 2 * self.extremizer.pool_modes < self.extremizer.N:
                violations.append("extremizer.pool_modes: 模态池成员数 2·pool_modes 小于 N")

        return violations

    def _scaling_violations(self) -> List[str]:
        d = self.grid.dim
        variant = self.experiment.variant
        critical = d / (d - 1.0)
        violations: List[str] = []
        if variant is None:
            violations.append("experiment.variant: scaling_study 需要 variant")
            return violations
        if self.norm is None or self.norm.N_list is None:
            violations.append("norm.N_list: scaling_study 需要显式 N_list")
        q = self.norm.q if self.norm else None
        if variant in ("main", "lorentz"):
            if q is None:
                violations.append(f"norm.q: {variant} 需要显式 q = d/(d−1)")
            elif abs(q - critical) > 1e-12:
                violations.append(f"norm.q: {variant} 需要 q = d/(d−1) = {critical}, 收到 {q}")
        if variant == "interpolated" and (q is None or not 1.0 < q < critical):
            violations.append(f"norm.q: interpolated 需要 1 < q < d/(d−1) = {critical}, 收到 {q}")
        if variant in ("lorentz", "interpolated") and self.weights is None:
            violations.append(f"weights: {variant} 需要 [weights] 段")
        if variant == "liebsob":
            if d < 3:
                violations.append(f"grid.dim: liebsob 需要 d >= 3, 当前 d = {d}")
            if self.norm is None or self.norm.components is None:
                violations.append("norm.components: liebsob 需要显式 components")
            if self.family is not None and self.family.recipe != "plane_wave_h1":
                violations.append("family.recipe: liebsob 只支持 plane_wave_h1")
        elif self.family is None:
            violations.append(f"family: {variant} 需要 [family] 段")
        elif self.family.recipe == "plane_wave_h1":
            violations.append(f"family.recipe: {variant} 需要成对族配方")
        return violations


def _format_location(loc) -> str:
    return ".".join(str(part) for part in loc) if loc else "<root>"


def parse_config(text: str, source: Optional[str] = None) -> RunConfig:
    """
    解析并校验 TOML 配置

    Raises:
        ConfigError: 语法错误、未知键、类型错误或约束违规, violations 列出全部问题 (带键路径)
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([f"toml: {e}"], source)
    return validate_config(data, source)


def validate_config(data: Dict[str, Any], source: Optional[str] = None) -> RunConfig:
    """由已解析的字典构造 RunConfig (也用于记录中回显配置的重新解析)"""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        violations: List[str] = []
        for error in e.errors():
            nested = error.get("ctx", {}).get("error")
            if isinstance(nested, ConfigError):
                violations.extend(nested.violations)
            else:
                violations.append(f"{_format_location(error['loc'])}: {error['msg']}")
        raise ConfigError(violations, source)
