from pydantic_settings import BaseSettings
from functools import lru_cache


class Settings(BaseSettings):
    """应用配置"""

    # 应用信息
    APP_NAME: str = "Div-Curl Spectral Lab"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # 输出目录 (每次运行写 record.json / series.csv / summary.txt)
    OUTPUT_DIR: str = "./runs"

    # 数值容差
    RESIDUAL_TOL: float = 1e-10  # 约束残差门限 (curl / div / 均值)
    ORTHONORMAL_TOL: float = 1e-10  # Gram 矩阵与单位阵的最大偏差
    IDENTITY_TOL: float = 1e-9  # 恒等式套件的相对偏差门限

    # 正交族规模上限
    FAMILY_MEMBER_CAP: int = 4000

    # 并行
    DEFAULT_JOBS: int = 1

    # 对偶范数下界上升法
    DUAL_CERTIFY_STEPS: int = 60
    DUAL_CERTIFY_STEP_SIZE: float = 0.5

    # record.json 中浮点数保留的有效位数
    RECORD_FLOAT_DIGITS: int = 12

    class Config:
        env_file = ".env"
        case_sensitive = True


@lru_cache()
def get_settings() -> Settings:
    """获取配置单例"""
    return Settings()
