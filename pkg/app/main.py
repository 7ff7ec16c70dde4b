import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from app.core.config import get_settings
from app.core.exceptions import ConfigError
from app.routers.experiment import list_experiments, router
from app.schemas.config import parse_config
from app.services.run_service import RunService

settings = get_settings()

# 配置日志
logging.basicConfig(
    level=logging.DEBUG if settings.DEBUG else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler()
    ]
)

logger = logging.getLogger(__name__)

EXIT_CONFIG_ERROR = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divcurl-lab",
        description=f"{settings.APP_NAME} {settings.APP_VERSION} - 按配置运行一次验证实验",
    )
    parser.add_argument("--config", type=Path, help="TOML 运行配置")
    parser.add_argument("--out", type=Path, default=None, help="输出目录 (覆盖配置中的 output_dir)")
    parser.add_argument("--seed", type=int, default=None, help="覆盖配置中的主种子")
    parser.add_argument("--jobs", type=int, default=settings.DEFAULT_JOBS, help="并行线程数")
    parser.add_argument("--list-experiments", action="store_true", help="列出可用实验后退出")
    parser.add_argument("--report", type=Path, default=None, metavar="DIR", help="汇总目录下的记录为 CSV")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.list_experiments:
        for name in list_experiments():
            print(f"{name:<20} {router.routes[name].summary}")
        return 0

    if args.report is not None:
        try:
            path = RunService.report(args.report, args.out / "report.csv" if args.out else None)
        except FileNotFoundError as e:
            logger.error(f"[Main] {str(e)}")
            return EXIT_CONFIG_ERROR
        print(path)
        return 0

    if args.config is None:
        parser.error("需要 --config (或 --list-experiments / --report)")

    try:
        text = args.config.read_text(encoding="utf-8")
        config = parse_config(text, source=str(args.config))
    except OSError as e:
        logger.error(f"[Main] 无法读取配置: {str(e)}")
        return EXIT_CONFIG_ERROR
    except ConfigError as e:
        for violation in e.violations:
            logger.error(f"[Main] 配置错误 {violation}")
        return EXIT_CONFIG_ERROR

    if args.seed is not None and args.seed < 0:
        parser.error("--seed 必须非负")
    if args.seed is not None:
        experiment = config.experiment.model_copy(update={"seed": args.seed})
        config = config.model_copy(update={"experiment": experiment})

    result = RunService.run(config, args.out, max(1, args.jobs))
    print(RunService.summary_text(result.record), end="")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
