from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

FamilyKind = Literal["curl_free", "div_free", "scalar_h1", "scalar_l2", "vector_h1"]


# 正交族的生成描述 (随族一起保存, 足以逐位重建)
class FamilyDescriptor(BaseModel):
    """生成器名称 + 参数 + 种子"""
    recipe: str = Field(..., description="生成器名称")
    params: Dict[str, Any] = Field(default_factory=dict, description="生成参数")
    seed: Optional[int] = Field(None, description="随机种子 (确定性生成器为空)")


# 运行配置中的 [family] 段
class FamilyRecipe(BaseModel):
    """实验用族配方; 成对实验 (E_n, B_n) 的配对规则也在这里"""
    model_config = ConfigDict(extra="forbid")

    recipe: Literal["semiclassical", "modes", "random", "plane_wave_h1"] = Field(
        "semiclassical", description="生成器"
    )
    kind: Optional[FamilyKind] = Field(None, description="单族实验的族类型")
    radius: Optional[float] = Field(None, description="semiclassical / plane_wave_h1 的模态球半径 (plane_wave_h1 缺省按 N 自动选取)")
    modes: Optional[List[List[int]]] = Field(None, description="modes 生成器的显式模态列表")
    polarization: Literal["first", "all"] = Field("first", description="无散族的极化规则")
    count: Optional[int] = Field(None, description="random 生成器的成员数")
    band: Optional[float] = Field(None, description="random 生成器的频带半径")
    seed: Optional[int] = Field(None, description="random 生成器种子 (缺省取实验主种子)")
    pairing: Literal["rotate", "same"] = Field("rotate", description="E_n 与 B_n 的配对规则")
    e_orthogonal: bool = Field(True, description="E 侧是否正交 (否则重复首个成员)")
    b_orthogonal: bool = Field(True, description="B 侧是否正交 (否则重复首个成员)")

    @model_validator(mode="after")
    def check_recipe_fields(self) -> "FamilyRecipe":
        if self.recipe == "semiclassical" and self.radius is None:
            raise ValueError("semiclassical 配方需要 radius")
        if self.recipe == "modes" and not self.modes:
            raise ValueError("modes 配方需要非空 modes 列表")
        if self.recipe == "random" and (self.count is None or self.band is None):
            raise ValueError("random 配方需要 count 与 band")
        if not (self.e_orthogonal or self.b_orthogonal):
            raise ValueError("e_orthogonal 与 b_orthogonal 至少一个为 true")
        return self
