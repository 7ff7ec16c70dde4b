import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional

from app.models.grid import Grid
from app.schemas.config import RunConfig
from app.schemas.record import ExperimentRecord
from app.services.extremizer_service import ExtremizerService
from app.services.identity_service import IdentityService
from app.services.scaling_service import ScalingService
from app.services.schatten_service import SchattenService
from app.services.spectral_service import SpectralService

logger = logging.getLogger(__name__)

Handler = Callable[[RunConfig, int, Optional[Path]], ExperimentRecord]


@dataclass
class Route:
    name: str
    summary: str
    handler: Handler


class ExperimentRouter:
    """实验名称 -> 处理函数的注册表, 只做配置到服务参数的翻译"""

    def __init__(self):
        self.routes: Dict[str, Route] = {}

    def experiment(self, name: str, summary: str) -> Callable[[Handler], Handler]:
        def register(handler: Handler) -> Handler:
            self.routes[name] = Route(name, summary, handler)
            return handler
        return register

    def names(self) -> List[str]:
        return sorted(self.routes)

    def dispatch(self, config: RunConfig, jobs: int = 1, out_dir: Optional[Path] = None) -> ExperimentRecord:
        """
        执行配置指定的实验

        服务层异常不向外抛出, 转换成 status = failed 的记录
        """
        name = config.experiment.name
        route = self.routes.get(name)
        if route is None:
            raise KeyError(f"未知实验: {name}")
        logger.info(f"[Router] 分发实验 {name}, seed={config.experiment.seed}, jobs={jobs}")
        try:
            record = route.handler(config, jobs, out_dir)
        except ValueError as e:
            logger.error(f"[Router] 实验 {name} 参数或约束错误: {str(e)}")
            record = _failed_record(config, f"{type(e).__name__}: {e}")
        except Exception as e:
            logger.error(f"[Router] 实验 {name} 失败: {str(e)}", exc_info=True)
            record = _failed_record(config, f"{type(e).__name__}: {e}")
        record.config = config.model_dump(mode="json")
        return record


def _failed_record(config: RunConfig, error: str) -> ExperimentRecord:
    return ExperimentRecord(
        experiment=config.experiment.name,
        variant=config.experiment.variant,
        dim=config.grid.dim,
        points_per_axis=config.grid.points_per_axis,
        seed=config.experiment.seed,
        status="failed",
        error=error,
    )


def _grid(config: RunConfig) -> Grid:
    return Grid(config.grid.dim, config.grid.points_per_axis)


router = ExperimentRouter()


@router.experiment("identity_suite", summary="恒等式套件: 交换子配对、散度、二形式、楔积与能量恒等式")
def run_identity_suite(config: RunConfig, jobs: int, out_dir: Optional[Path]) -> ExperimentRecord:
    section = config.identity
    kwargs = {} if section is None else {"trials": section.trials, "pairs": section.pairs, "u_band": section.u_band}
    return IdentityService.identity_suite(_grid(config), config.experiment.seed, config.grid.band, jobs=jobs, **kwargs)


@router.experiment("scaling_study", summary="标度律: main / triangle / lorentz / interpolated / liebsob")
def run_scaling_study(config: RunConfig, jobs: int, out_dir: Optional[Path]) -> ExperimentRecord:
    norm = config.norm
    return ScalingService.scaling_study(
        config.experiment.variant,
        _grid(config),
        config.family,
        norm.N_list,
        q=norm.q,
        s=norm.s,
        weights=config.weights.build() if config.weights else None,
        components=norm.components,
        triangle_norm=norm.triangle_norm,
        certify_steps=norm.certify_steps,
        certify_step_size=norm.certify_step_size,
        seed=config.experiment.seed,
        jobs=jobs,
    )


@router.experiment("schatten_study", summary="弱 Schatten 范数: [R_j,u] 与 u(−Δ)^{−1/2}")
def run_schatten_study(config: RunConfig, jobs: int, out_dir: Optional[Path]) -> ExperimentRecord:
    section = config.schatten
    dump_dir = out_dir if section.dump_singular_values else None
    return SchattenService.schatten_study(
        section.which,
        _grid(config),
        section.u,
        config.grid.band,
        p=section.p if section.p is not None else (config.norm.p if config.norm else None),
        component=section.component,
        seed=config.experiment.seed,
        dump_dir=dump_dir,
    )


@router.experiment("extremizer_search", summary="主比值的探索性最大化")
def run_extremizer_search(config: RunConfig, jobs: int, out_dir: Optional[Path]) -> ExperimentRecord:
    section = config.extremizer
    return ExtremizerService.extremizer_search(
        _grid(config), section.N, section.pool_modes, section.steps, section.step_size, config.experiment.seed,
    )


@router.experiment("spectral_suite", summary="迹不等式、部分和界与 Clifford 关系")
def run_spectral_suite(config: RunConfig, jobs: int, out_dir: Optional[Path]) -> ExperimentRecord:
    section = config.spectral
    kwargs = {} if section is None else {
        "trials": section.trials, "max_size": section.max_size, "clifford_dims": section.clifford_dims,
    }
    return SpectralService.spectral_suite(_grid(config), config.experiment.seed, config.grid.band, **kwargs)


def list_experiments() -> List[str]:
    return router.names()


def dispatch(config: RunConfig, jobs: int = 1, out_dir: Optional[Path] = None) -> ExperimentRecord:
    return router.dispatch(config, jobs, out_dir)
