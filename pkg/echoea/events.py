import itertools
import logging
import threading
from contextlib import contextmanager
from enum import Enum, auto
from typing import Any, Callable, Dict, Iterator, Optional

logger = logging.getLogger(__name__)

Handler = Callable[[Any], None]


class RunEvent(Enum):
    """Events emitted while an experiment runs."""
    # Data
    DATASET_LOADED = auto()
    SEEDS_SPLIT = auto()

    # Pipeline stage trace
    STAGE_ENTERED = auto()
    STAGE_SKIPPED = auto()

    # Training progress
    EPOCH_COMPLETED = auto()
    BOOTSTRAP_ROUND = auto()
    CHECKPOINT_SAVED = auto()

    # Results
    EVALUATED = auto()
    ARTIFACT_WRITTEN = auto()


class Subscription:
    """Handle returned by :meth:`EventBus.subscribe`; call ``unsubscribe()`` when done."""

    def __init__(self, bus: "EventBus", event: RunEvent, key: int):
        self._bus = bus
        self._event = event
        self._key = key
        self._active = True

    @property
    def event(self) -> RunEvent:
        return self._event

    @property
    def active(self) -> bool:
        return self._active

    def unsubscribe(self) -> None:
        if self._active:
            self._bus._remove(self._event, self._key)
            self._active = False


class EventBus:
    """Process-wide event bus between the pipeline and its observers.

    The encoder, the bootstrapping step and the training loop emit; the
    experiment runner listens to record the stage trace. Handlers run
    synchronously in subscription order, so a trace built from events is as
    deterministic as the run that emitted them.

    Example:
        with event_bus.subscribed(RunEvent.EPOCH_COMPLETED, on_epoch):
            trainer.run()
    """
    _instance: Optional["EventBus"] = None
    _instance_lock = threading.Lock()

    def __new__(cls) -> "EventBus":
        if cls._instance is None:
            with cls._instance_lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
                    cls._instance._handlers: Dict[RunEvent, Dict[int, Handler]] = {}
                    cls._instance._keys = itertools.count()
        return cls._instance

    def subscribe(self, event: RunEvent, handler: Handler) -> Subscription:
        key = next(self._keys)
        self._handlers.setdefault(event, {})[key] = handler
        return Subscription(self, event, key)

    @contextmanager
    def subscribed(self, event: RunEvent, handler: Handler) -> Iterator[Subscription]:
        """Subscribe for the duration of a ``with`` block."""
        subscription = self.subscribe(event, handler)
        try:
            yield subscription
        finally:
            subscription.unsubscribe()

    def _remove(self, event: RunEvent, key: int) -> None:
        self._handlers.get(event, {}).pop(key, None)

    def emit(self, event: RunEvent, data: Any = None) -> None:
        """Call every handler of ``event``; a failing handler is logged and skipped."""
        handlers = list(self._handlers.get(event, {}).values())
        if not handlers:
            return
        logger.debug(f"{event.name} -> {len(handlers)} handler(s)")
        for handler in handlers:
            try:
                handler(data)
            except Exception as e:  # Intentionally broad: one observer must not abort a run
                logger.error(f"Error in {event.name} handler: {e}")

    def clear(self) -> None:
        """Drop every subscription (tests)."""
        self._handlers.clear()


event_bus = EventBus()
