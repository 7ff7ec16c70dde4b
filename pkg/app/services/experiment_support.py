# services/experiment_support.py
"""
实验公共工具 - 随机流、指数拟合、常数稳定比、相对偏差、门限判定

所有随机数都来自一个主种子: stream_rng(seed, stream) 以计数器型 Philox
生成器派生互不重叠的子流, 不使用任何全局随机状态。
"""
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from app.schemas.record import FitSummary, SeriesPoint

logger = logging.getLogger(__name__)

# 子流编号 (同一记录内各用途互不重叠)
STREAM_FAMILY = 1
STREAM_FIELDS = 2
STREAM_MIXING = 4
STREAM_TRIALS = 100  # + 试验下标 (< 900)
STREAM_U = 1000  # + u 配方下标


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """主种子 seed 的第 stream 条子流"""
    if seed < 0 or stream < 0:
        raise ValueError(f"seed 与 stream 必须非负, 收到 seed={seed}, stream={stream}")
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, stream]))


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    intercept: float
    residual: float
    points: int


def fit_exponent(controls: Sequence[float], measured: Sequence[float]) -> Optional[ExponentFit]:
    """
    log(measured) 对 log(control) 的最小二乘斜率

    只使用两者都为正的点; 少于 3 个点时不拟合, 返回 None。
    residual 为拟合残差的均方根。
    """
    x = np.asarray(controls, dtype=float)
    y = np.asarray(measured, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if np.count_nonzero(keep) < 3:
        return None
    log_x, log_y = np.log(x[keep]), np.log(y[keep])
    result = stats.linregress(log_x, log_y)
    residual = float(np.sqrt(np.mean((log_y - (result.intercept + result.slope * log_x)) ** 2)))
    return ExponentFit(float(result.slope), float(result.intercept), residual, int(np.count_nonzero(keep)))


def ratio_series(measured: Sequence[float], predicted: Sequence[float]) -> List[Optional[float]]:
    """measured / predicted; 0/0 记为 0, 预测为 0 而实测非零记为 None"""
    ratios: List[Optional[float]] = []
    for m, p in zip(measured, predicted):
        if p > 0:
            ratios.append(float(m / p))
        elif m == 0:
            ratios.append(0.0)
        else:
            ratios.append(None)
    return ratios


def stability_ratio(ratios: Sequence[Optional[float]]) -> Optional[float]:
    """正比值序列的 max/min (常数稳定比); 没有正比值时为 None"""
    positive = [r for r in ratios if r is not None and r > 0]
    if not positive:
        return None
    return float(max(positive) / min(positive))


def relative_deviation(lhs: complex, rhs: complex, scale: float) -> float:
    """|lhs − rhs| / scale, scale 为该配对的 Cauchy–Schwarz 上界; scale = 0 时取绝对偏差"""
    diff = float(abs(complex(lhs) - complex(rhs)))
    return diff / scale if scale > 0 else diff


def tail_slope(singular_values: Sequence[float]) -> Optional[float]:
    """
    log s_n 对 log n 在中段十倍区间上的斜率

    中心 n_c = sqrt(非零奇异值个数), 区间 [n_c/√10, n_c·√10]; 点数不足 3 时返回 None
    """
    s = np.asarray(singular_values, dtype=float)
    scale = s[0] if s.size else 0.0
    nonzero = int(np.count_nonzero(s > 1e-13 * scale)) if scale > 0 else 0
    if nonzero < 3:
        return None
    center = np.sqrt(nonzero)
    lo, hi = center / np.sqrt(10.0), center * np.sqrt(10.0)
    n = np.arange(1, nonzero + 1, dtype=float)
    window = (n >= lo) & (n <= hi)
    if np.count_nonzero(window) < 3:
        return None
    result = stats.linregress(np.log(n[window]), np.log(s[:nonzero][window]))
    return float(result.slope)


# 门限: 键名后缀决定比较方向
_GATE_METRICS = {
    "exponent_max": ("exponent", "max"),
    "exponent_min": ("exponent", "min"),
    "ratio_spread_max": ("ratio_spread", "max"),
    "deviation_max": ("max_deviation", "max"),
    "slope_min": ("tail_slope_min", "min"),
    "slope_max": ("tail_slope_max", "max"),
    "rhs_spread_min": ("rhs_spread", "min"),
    "component_ratio_max": ("component_ratio", "max"),
}


# u 族右端范数的最小跨度; schatten_study 未显式配置 rhs_spread_min 时按此判定
RHS_SPREAD_MIN = 10.0

# 未显式配置时仍然生效的门限
_DEFAULT_GATES = {
    "schatten_study": {"rhs_spread_min": RHS_SPREAD_MIN},
}


def resolve_gates(experiment: str, gates: Mapping[str, Optional[float]]) -> Dict[str, Optional[float]]:
    """配置门限 + 该实验的缺省门限 (配置值优先)"""
    resolved = dict(gates)
    for name, threshold in _DEFAULT_GATES.get(experiment, {}).items():
        if resolved.get(name) is None:
            resolved[name] = threshold
    return resolved


def evaluate_gates(metrics: Mapping[str, Optional[float]], gates: Mapping[str, Optional[float]]) -> Dict[str, bool]:
    """
    按配置的门限判定指标

    指标缺失 (例如点数不足无法拟合指数) 时该门限判为不通过。
    """
    results: Dict[str, bool] = {}
    for name, threshold in gates.items():
        if threshold is None:
            continue
        metric_name, direction = _GATE_METRICS[name]
        value = metrics.get(metric_name)
        if value is None or not np.isfinite(value):
            results[name] = False
        elif direction == "max":
            results[name] = bool(value <= threshold)
        else:
            results[name] = bool(value >= threshold)
        logger.info(f"[Gates] {name}: {metric_name}={value} 门限={threshold} -> {'PASS' if results[name] else 'FAIL'}")
    return results



def summarize_series(controls: Sequence[float], measured: Sequence[float],
                     predictors: Optional[Sequence[Optional[float]]] = None,
                     extras: Optional[Sequence[Dict[str, Any]]] = None) -> Dict[str, Any]:
    """
    组装测量序列及其拟合

    Returns:
        dict: series, fit (FitSummary 或 None), predictor_exponent, stability_ratio
    """
    count = len(controls)
    predictors = list(predictors) if predictors is not None else [None] * count
    extras = list(extras) if extras is not None else [{} for _ in range(count)]
    if not (len(measured) == len(predictors) == len(extras) == count):
        raise ValueError("序列各列长度不一致")

    with_predictor = [i for i, p in enumerate(predictors) if p is not None]
    ratios: List[Optional[float]] = [None] * count
    for i, r in zip(with_predictor, ratio_series([measured[i] for i in with_predictor],
                                                 [predictors[i] for i in with_predictor])):
        ratios[i] = r

    series = [
        SeriesPoint(control=float(c), measured=float(m), predictor=None if p is None else float(p),
                    ratio=r, extras=dict(e))
        for c, m, p, r, e in zip(controls, measured, predictors, ratios, extras)
    ]
    fit = fit_exponent(controls, measured)
    predictor_fit = fit_exponent([controls[i] for i in with_predictor], [predictors[i] for i in with_predictor])
    return {
        "series": series,
        "fit": FitSummary(**asdict(fit)) if fit else None,
        "predictor_exponent": predictor_fit.exponent if predictor_fit else None,
        "stability_ratio": stability_ratio(ratios),
    }
