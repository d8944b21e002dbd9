import uuid
import threading
import time
from typing import Dict, Optional
from dataclasses import dataclass

from app.core.config import settings
from app.models.schemas import CampaignResult


@dataclass
class RunData:
    """Data structure for storing a finished campaign"""
    run_id: str
    result: CampaignResult
    created_at: float
    last_accessed: float


class RunRegistry:
    """Thread-safe store of campaigns run through the HTTP API"""

    def __init__(self, run_timeout: int = 3600):  # 1 hour default timeout
        self._runs: Dict[str, RunData] = {}
        self._lock = threading.RLock()
        self.run_timeout = run_timeout

    def store(self, result: CampaignResult) -> str:
        """
        Store a campaign result
        Returns:
            Run ID string
        """
        run_id = str(uuid.uuid4())
        current_time = time.time()

        with self._lock:
            self._runs[run_id] = RunData(
                run_id=run_id,
                result=result,
                created_at=current_time,
                last_accessed=current_time
            )

            # Clean up expired runs
            self._cleanup_expired_runs()

        return run_id

    def get(self, run_id: str) -> Optional[RunData]:
        """
        Get a stored run by ID
        Returns:
            RunData if found and not expired, None otherwise
        """
        with self._lock:
            run_data = self._runs.get(run_id)

            if run_data is None:
                return None

            if time.time() - run_data.last_accessed > self.run_timeout:
                del self._runs[run_id]
                return None

            run_data.last_accessed = time.time()
            return run_data

    def delete(self, run_id: str) -> bool:
        with self._lock:
            return self._runs.pop(run_id, None) is not None

    def _cleanup_expired_runs(self):
        """Clean up expired runs (called with lock held)"""
        current_time = time.time()
        expired = [
            run_id for run_id, run_data in self._runs.items()
            if current_time - run_data.last_accessed > self.run_timeout
        ]

        for run_id in expired:
            del self._runs[run_id]

    def get_active_runs_count(self) -> int:
        with self._lock:
            self._cleanup_expired_runs()
            return len(self._runs)

    def clear(self):
        """Clear all runs (useful for testing or shutdown)"""
        with self._lock:
            self._runs.clear()


# Global run registry instance
run_registry = RunRegistry(run_timeout=settings.run_timeout)
