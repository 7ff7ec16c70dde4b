"""
实验单元并行执行

各 (N, 配置) 单元相互独立; 结果按输入顺序返回, 因此输出文件与 jobs 数无关。
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_cells(fn: Callable[[T], R], items: Iterable[T], jobs: int = 1) -> List[R]:
    """按顺序映射; jobs <= 1 时串行执行"""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"[Parallel] {len(items)} 个单元, 线程数 {jobs}")
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
