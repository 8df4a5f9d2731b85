"""
hctlab 配置管理模块

数值默认值、阈值搜索精度和 Monte Carlo 规模，均可通过环境变量 (或 .env 文件) 覆盖
"""

import logging
import os
from typing import Dict, Any

from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger("hctlab.config")


class Config:
    """配置管理类"""

    # 基本信息
    APP_NAME = os.getenv("HCTLAB_NAME", "hctlab")
    VERSION = os.getenv("HCTLAB_VERSION", "0.1.0")

    # 调试模式与日志级别
    DEBUG = os.getenv("DEBUG", "false").lower() == "true"
    LOG_LEVEL = os.getenv("HCTLAB_LOG_LEVEL", "DEBUG" if DEBUG else "INFO").upper()

    # rwsim 中重复实验的并行线程数上限
    THREADS = int(os.getenv("HCTLAB_THREADS", "1"))

    # HC 扫描比例与理想 HCT 泛函的下界 t0
    ALPHA0 = float(os.getenv("HCTLAB_ALPHA0", "0.10"))
    HC_T0 = float(os.getenv("HCTLAB_T0", "0.5"))

    # 阈值搜索: 网格步长、黄金分割精度、搜索区间上端 tau + span
    GRID_STEP = float(os.getenv("HCTLAB_GRID_STEP", "1e-3"))
    GOLDEN_TOL = float(os.getenv("HCTLAB_GOLDEN_TOL", "1e-9"))
    TAIL_SPAN = float(os.getenv("HCTLAB_TAIL_SPAN", "6.0"))

    # Monte Carlo 模拟
    REPLICATES = int(os.getenv("HCTLAB_REPLICATES", "100"))
    TEST_SIZE = int(os.getenv("HCTLAB_TEST_SIZE", "2000"))
    SEED = int(os.getenv("HCTLAB_SEED", "20081211"))
    FULL_MATRIX_LIMIT = int(float(os.getenv("HCTLAB_FULL_MATRIX_LIMIT", "1e9")))  # p*n 个元素

    @classmethod
    def get_config_dict(cls) -> Dict[str, Any]:
        """获取配置字典 (写入运行清单 manifest.json)"""
        return {
            "app_name": cls.APP_NAME,
            "version": cls.VERSION,
            "debug": cls.DEBUG,
            "log_level": cls.LOG_LEVEL,
            "threads": cls.THREADS,
            "alpha0": cls.ALPHA0,
            "hc_t0": cls.HC_T0,
            "grid_step": cls.GRID_STEP,
            "golden_tol": cls.GOLDEN_TOL,
            "tail_span": cls.TAIL_SPAN,
            "replicates": cls.REPLICATES,
            "test_size": cls.TEST_SIZE,
            "seed": cls.SEED,
            "full_matrix_limit": cls.FULL_MATRIX_LIMIT,
        }

    @classmethod
    def validate(cls) -> bool:
        """验证配置是否有效，每个无效项记录一条警告"""
        problems = []
        if cls.THREADS < 1:
            problems.append(f"HCTLAB_THREADS must be >= 1, got {cls.THREADS}")
        if not 0.0 < cls.ALPHA0 <= 1.0:
            problems.append(f"HCTLAB_ALPHA0 must be in (0, 1], got {cls.ALPHA0}")
        if cls.HC_T0 < 0.0:
            problems.append(f"HCTLAB_T0 must be >= 0, got {cls.HC_T0}")
        if not 0.0 < cls.GRID_STEP < 1.0:
            problems.append(f"HCTLAB_GRID_STEP must be in (0, 1), got {cls.GRID_STEP}")
        if cls.GOLDEN_TOL <= 0.0:
            problems.append(f"HCTLAB_GOLDEN_TOL must be positive, got {cls.GOLDEN_TOL}")
        if cls.TAIL_SPAN <= 0.0:
            problems.append(f"HCTLAB_TAIL_SPAN must be positive, got {cls.TAIL_SPAN}")
        if cls.REPLICATES < 1 or cls.TEST_SIZE < 1:
            problems.append("HCTLAB_REPLICATES and HCTLAB_TEST_SIZE must be >= 1")
        if not 0 <= cls.SEED < 2**64:
            problems.append(f"HCTLAB_SEED must be a 64-bit unsigned integer, got {cls.SEED}")

        for problem in problems:
            logger.warning(problem)
        return not problems


if __name__ != "__main__":
    Config.validate()
