"""
Progress indicator for long-running stages.
"""

import sys
import threading
import time
from typing import Optional, TextIO


class ProgressReporter:
    """Background ticker showing done/total with cache and failure tallies."""

    frames = ['|', '/', '-', '\\']

    def __init__(self, total: int, message: str = "Classifying", stream: Optional[TextIO] = None,
                 enabled: Optional[bool] = None, interval: float = 0.2):
        self.total = total
        self.message = message
        self.stream = stream or sys.stderr
        self.interval = interval
        if enabled is None:
            enabled = hasattr(self.stream, 'isatty') and self.stream.isatty()
        self.enabled = enabled
        self.done = 0
        self.cached = 0
        self.failed = 0
        self._lock = threading.Lock()
        self._running = False
        self._thread: Optional[threading.Thread] = None

    def update(self, cached: bool = False, failed: bool = False):
        """Record one finished item."""
        with self._lock:
            self.done += 1
            if cached:
                self.cached += 1
            if failed:
                self.failed += 1

    def line(self) -> str:
        with self._lock:
            return (f"{self.message} {self.done}/{self.total} "
                    f"(cached {self.cached}, failed {self.failed})")

    def _animate(self):
        idx = 0
        while self._running:
            try:
                self.stream.write(f"\r{self.frames[idx % len(self.frames)]} {self.line()}")
                self.stream.flush()
            except (UnicodeEncodeError, ValueError):
                pass
            time.sleep(self.interval)
            idx += 1

    def start(self):
        if self.enabled and not self._running:
            self._running = True
            self._thread = threading.Thread(target=self._animate, daemon=True)
            self._thread.start()

    def stop(self, clear: bool = True):
        if self._running:
            self._running = False
            if self._thread:
                self._thread.join(timeout=self.interval * 2)
            if clear:
                self.stream.write('\r' + ' ' * (len(self.line()) + 4) + '\r')
                self.stream.flush()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.stop()
