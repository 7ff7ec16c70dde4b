# services/run_service.py
"""
运行与汇总

run: 分发实验 -> 门限判定 -> 写 record.json / series.csv / summary.txt
report: 把目录下的 JSON 记录汇总成一张 CSV 表

record.json 键排序、两空格缩进、浮点数按 RECORD_FLOAT_DIGITS 位有效数字取整,
墙钟时间只写进 summary.txt, 因此同一配置 + 种子的重跑逐字节一致。
"""
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from pydantic import ValidationError

from app.core.config import get_settings
from app.routers.experiment import dispatch
from app.schemas.config import RunConfig
from app.schemas.record import ExperimentRecord
from app.services.experiment_support import evaluate_gates, resolve_gates

logger = logging.getLogger(__name__)

RECORD_FILE = "record.json"
SERIES_FILE = "series.csv"
SUMMARY_FILE = "summary.txt"
SERIES_COLUMNS = ["control", "measured", "predictor", "ratio"]
REPORT_COLUMNS = ["experiment", "variant", "d", "n", "exponent", "predictor_exponent",
                  "ratio_spread", "max_deviation", "equivalence_constant", "status", "flag", "source"]

EXIT_OK = 0
EXIT_GATES_FAILED = 1
EXIT_EXPERIMENT_FAILED = 2


@dataclass
class RunResult:
    exit_code: int
    record: ExperimentRecord
    out_dir: Path


def _round_floats(value: Any, digits: int) -> Any:
    """递归取整到 digits 位有效数字; 非有限值记为 null"""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            return None
        return float(f"{value:.{digits}g}")
    if isinstance(value, dict):
        return {str(k): _round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round_floats(v, digits) for v in value]
    return value


def _canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


class RunService:
    """单次运行与结果汇总"""

    @staticmethod
    def resolve_out_dir(config: RunConfig, out_dir: Optional[Union[str, Path]] = None) -> Path:
        """命令行 --out > [experiment].output_dir > OUTPUT_DIR/<实验名>"""
        if out_dir is not None:
            return Path(out_dir)
        if config.experiment.output_dir:
            return Path(config.experiment.output_dir)
        return Path(get_settings().OUTPUT_DIR) / config.experiment.name

    @staticmethod
    def series_csv(record: ExperimentRecord) -> str:
        digits = get_settings().RECORD_FLOAT_DIGITS
        frame = pd.DataFrame(
            [[p.control, p.measured, p.predictor, p.ratio] for p in record.series],
            columns=SERIES_COLUMNS,
            dtype=float,
        )
        return frame.to_csv(index=False, float_format=f"%.{digits - 1}e", lineterminator="\n")

    @staticmethod
    def record_json(record: ExperimentRecord) -> str:
        data = record.model_dump(mode="json")
        return _canonical_json(_round_floats(data, get_settings().RECORD_FLOAT_DIGITS))

    @staticmethod
    def summary_text(record: ExperimentRecord) -> str:
        """一页纯文本摘要"""
        lines = [
            f"experiment : {record.experiment}" + (f" ({record.variant})" if record.variant else ""),
            f"grid       : d={record.dim} n={record.points_per_axis}",
            f"seed       : {record.seed}",
            f"status     : {record.status}" + (f" - {record.error}" if record.error else ""),
        ]
        if record.fit is not None:
            lines.append(f"exponent   : {record.fit.exponent:.6g} (rms residual {record.fit.residual:.3g}, "
                         f"{record.fit.points} points)")
        else:
            lines.append("exponent   : absent")
        if record.predictor_exponent is not None:
            lines.append(f"predictor  : exponent {record.predictor_exponent:.6g}")
        if record.stability_ratio is not None:
            lines.append(f"ratio max/min : {record.stability_ratio:.6g}")
        if record.metrics:
            lines.append("metrics:")
            for name in sorted(record.metrics):
                value = record.metrics[name]
                lines.append(f"  {name:<20} {'absent' if value is None else f'{value:.6g}'}")
        if record.gates:
            lines.append("gates:")
            for name in sorted(record.gates):
                lines.append(f"  {name:<20} {'PASS' if record.gates[name] else 'FAIL'}")
        else:
            lines.append("gates: none configured")
        lines.append(f"result     : {'PASS' if record.passed else 'FAIL'}")
        if record.wall_clock is not None:
            lines.append(f"wall clock : {record.wall_clock:.2f} s")
        return "\n".join(lines) + "\n"

    @staticmethod
    def run(config: RunConfig, out_dir: Optional[Union[str, Path]] = None, jobs: int = 1) -> RunResult:
        """
        执行一次运行并写出三个文件

        Returns:
            RunResult; exit_code 为 0 当且仅当实验成功且全部门限通过
        """
        target = RunService.resolve_out_dir(config, out_dir)
        target.mkdir(parents=True, exist_ok=True)
        started = time.perf_counter()
        record = dispatch(config, jobs, target)
        record.wall_clock = time.perf_counter() - started

        if record.status == "ok":
            gates = resolve_gates(config.experiment.name, config.gates.model_dump())
            record.gates = evaluate_gates(record.metrics, gates)
            record.passed = all(record.gates.values())
        else:
            record.gates = {}
            record.passed = False

        series_text = RunService.series_csv(record)
        config_text = _canonical_json(record.config)
        record.artifacts = {
            "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
            "series_sha256": hashlib.sha256(series_text.encode("utf-8")).hexdigest(),
        }
        (target / SERIES_FILE).write_text(series_text, encoding="utf-8")
        (target / RECORD_FILE).write_text(RunService.record_json(record), encoding="utf-8")
        (target / SUMMARY_FILE).write_text(RunService.summary_text(record), encoding="utf-8")
        logger.info(f"[Runner] 结果已写入 {target} (passed={record.passed}, {record.wall_clock:.2f}s)")

        if record.status != "ok":
            code = EXIT_EXPERIMENT_FAILED
        else:
            code = EXIT_OK if record.passed else EXIT_GATES_FAILED
        return RunResult(code, record, target)

    @staticmethod
    def _report_row(path: Path, root: Path) -> Dict[str, Any]:
        source = str(path.relative_to(root))
        try:
            record = ExperimentRecord.model_validate(json.loads(path.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, ValidationError, UnicodeDecodeError) as e:
            logger.warning(f"[Report] 无法解析记录 {source}: {str(e).splitlines()[0]}")
            return {"experiment": None, "flag": "malformed", "source": source}
        flags = []
        if record.status != "ok":
            flags.append("failed")
        if record.fit is None:
            flags.append("no_exponent")
        return {
            "experiment": record.experiment,
            "variant": record.variant,
            "d": record.dim,
            "n": record.points_per_axis,
            "exponent": record.exponent,
            "predictor_exponent": record.predictor_exponent,
            "ratio_spread": record.metrics.get("ratio_spread", record.stability_ratio),
            "max_deviation": record.metrics.get("max_deviation"),
            "equivalence_constant": record.metrics.get("equivalence_constant"),
            "status": record.status,
            "flag": ";".join(flags),
            "source": source,
        }

    @staticmethod
    def report(directory: Union[str, Path], output: Optional[Union[str, Path]] = None) -> Path:
        """
        汇总目录 (递归) 下的全部 JSON 记录

        行按 (experiment, d, n, source) 排序; 无法解析的记录单独成行并标记 malformed

        Returns:
            写出的 CSV 路径 (缺省 <directory>/report.csv)
        """
        root = Path(directory)
        if not root.is_dir():
            raise FileNotFoundError(f"记录目录不存在: {root}")
        rows: List[Dict[str, Any]] = [RunService._report_row(path, root) for path in sorted(root.rglob("*.json"))]
        frame = pd.DataFrame(rows, columns=REPORT_COLUMNS)
        if not frame.empty:
            frame["d"] = frame["d"].astype("Int64")
            frame["n"] = frame["n"].astype("Int64")
            frame = frame.sort_values(["experiment", "d", "n", "source"], na_position="last", kind="stable")
        target = Path(output) if output is not None else root / "report.csv"
        target.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(target, index=False, float_format="%.6g", lineterminator="\n")
        logger.info(f"[Report] {len(rows)} 条记录 -> {target}")
        return target
