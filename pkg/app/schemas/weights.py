from typing import List

import numpy as np
from pydantic import BaseModel, Field, field_validator


class SequenceWeights(BaseModel):
    """非负系数序列 λ; 递减重排按需计算, 不假定输入有序"""
    values: List[float] = Field(..., description="系数 λ_n, 全部 >= 0")

    @field_validator("values")
    @classmethod
    def check_nonnegative(cls, values: List[float]) -> List[float]:
        bad = [i for i, v in enumerate(values) if not np.isfinite(v) or v < 0]
        if bad:
            raise ValueError(f"系数必须为有限非负数, 违规下标: {bad[:10]}")
        return values

    @classmethod
    def power_law(cls, power: float, length: int) -> "SequenceWeights":
        """λ_n = n^{−power}, n = 1..length"""
        n = np.arange(1, length + 1, dtype=float)
        return cls(values=(n ** (-power)).tolist())

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def rearranged(self) -> np.ndarray:
        """递减重排 λ*"""
        return np.sort(self.as_array())[::-1]

    def prefix(self, count: int) -> "SequenceWeights":
        return SequenceWeights(values=self.values[:count])
