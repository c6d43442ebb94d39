"""
OS-specific utilities
"""

import platform
from typing import Optional

import psutil


class OSUtils:
    """Utility class for OS-specific queries"""

    @staticmethod
    def get_os_info() -> dict:
        """Get detailed OS information"""
        return {
            "system": platform.system(),
            "release": platform.release(),
            "machine": platform.machine(),
            "python_version": platform.python_version()
        }

    @staticmethod
    def get_cpu_count() -> int:
        """Number of usable CPUs, never below 1"""
        count = psutil.cpu_count(logical=True)
        return max(1, count or 1)

    @staticmethod
    def resolve_workers(requested: Optional[int]) -> int:
        """Worker count from a flag/config value; None or 0 means all CPUs"""
        if not requested:
            return OSUtils.get_cpu_count()
        if requested < 0:
            raise ValueError(f"worker count must be positive, got {requested}")
        return requested
