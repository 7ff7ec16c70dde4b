from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class SeriesPoint(BaseModel):
    """测量序列中的一个点 (控制量, 实测值, 预测值, 比值)"""
    control: float = Field(..., description="控制量 (N、右端范数等)")
    measured: float = Field(..., description="左端实测值")
    predictor: Optional[float] = Field(None, description="右端预测值")
    ratio: Optional[float] = Field(None, description="measured / predictor, 0/0 记为 0")
    extras: Dict[str, Any] = Field(default_factory=dict, description="附加列 (标签、下界窗口等)")


class FitSummary(BaseModel):
    """log-log 最小二乘拟合结果"""
    exponent: float = Field(..., description="拟合指数")
    intercept: float = Field(..., description="截距")
    residual: float = Field(..., description="残差均方根")
    points: int = Field(..., description="参与拟合的点数")


class ExperimentRecord(BaseModel):
    """
    单次实验的完整记录

    由配置 + 种子逐位可重建; 墙钟时间不进入 record.json
    """
    experiment: str = Field(..., description="实验名称")
    variant: Optional[str] = Field(None, description="子变体 (scaling_study 的 main / triangle / ...)")
    dim: int = Field(..., description="维数 d")
    points_per_axis: int = Field(..., description="每轴网格点数 n")
    seed: int = Field(0, description="主种子")
    config: Dict[str, Any] = Field(default_factory=dict, description="完整运行配置回显")
    series: List[SeriesPoint] = Field(default_factory=list, description="测量序列")
    fit: Optional[FitSummary] = Field(None, description="实测序列指数拟合 (点数 < 3 时为空)")
    predictor_exponent: Optional[float] = Field(None, description="预测序列的拟合指数")
    stability_ratio: Optional[float] = Field(None, description="常数稳定比 max/min(measured/predictor)")
    metrics: Dict[str, Optional[float]] = Field(default_factory=dict, description="门限所用的标量指标")
    details: Dict[str, Any] = Field(default_factory=dict, description="实验特有的明细")
    gates: Dict[str, bool] = Field(default_factory=dict, description="门限判定结果")
    passed: bool = Field(False, description="全部门限通过且实验未失败")
    status: Literal["ok", "failed"] = Field("ok", description="运行状态")
    error: Optional[str] = Field(None, description="失败原因")
    artifacts: Dict[str, str] = Field(default_factory=dict, description="产物 SHA-256")
    wall_clock: Optional[float] = Field(None, exclude=True, description="耗时 (秒), 只写入 summary.txt")

    @property
    def exponent(self) -> Optional[float]:
        return self.fit.exponent if self.fit else None
