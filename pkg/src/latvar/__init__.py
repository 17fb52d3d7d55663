from .errors import LatvarError

__all__ = ["LatvarError"]
