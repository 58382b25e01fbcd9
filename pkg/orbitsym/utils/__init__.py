"""
Utilities Package
"""
from orbitsym.utils.gradcheck import check_gradient, numerical_gradient, relative_error
from orbitsym.utils.helpers import banner, ensure_dir, format_table, now_utc, write_json

__all__ = [
    "check_gradient",
    "numerical_gradient",
    "relative_error",
    "banner",
    "ensure_dir",
    "format_table",
    "now_utc",
    "write_json",
]
