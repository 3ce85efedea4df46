"""
Storage interface and in-memory cache for pattern -> local linear model
"""
import threading
from typing import Callable, Dict, Optional

from app.schemas.network_schemas import ActivationPattern, LocalLinearModel


class ModelCache:
    """Abstract cache interface so batch jobs can share unwrapped models"""

    def get(self, pattern: ActivationPattern) -> Optional[LocalLinearModel]:
        raise NotImplementedError

    def put(self, pattern: ActivationPattern, model: LocalLinearModel) -> None:
        raise NotImplementedError

    def stats(self) -> Dict[str, int]:
        raise NotImplementedError


class InMemoryModelCache(ModelCache):
    """Dictionary cache; reads are lock-free, inserts are serialized"""

    def __init__(self):
        self.models: Dict[tuple, LocalLinearModel] = {}
        self.lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.unwrap_calls = 0

    def get(self, pattern: ActivationPattern) -> Optional[LocalLinearModel]:
        model = self.models.get(pattern.key())
        if model is None:
            self.misses += 1
        else:
            self.hits += 1
        return model

    def put(self, pattern: ActivationPattern, model: LocalLinearModel) -> None:
        with self.lock:
            self.models.setdefault(pattern.key(), model)

    def get_or_compute(
        self,
        pattern: ActivationPattern,
        compute: Callable[[ActivationPattern], LocalLinearModel],
    ) -> LocalLinearModel:
        """Return the cached model or compute, count and store it"""
        model = self.get(pattern)
        if model is not None:
            return model
        with self.lock:
            model = self.models.get(pattern.key())
            if model is None:
                model = compute(pattern)
                self.unwrap_calls += 1
                self.models[pattern.key()] = model
        return model

    def stats(self) -> Dict[str, int]:
        return {
            "hits": self.hits,
            "misses": self.misses,
            "unwrap_calls": self.unwrap_calls,
            "distinct_patterns": len(self.models),
        }

    def clear(self) -> None:
        with self.lock:
            self.models.clear()
            self.hits = self.misses = self.unwrap_calls = 0
