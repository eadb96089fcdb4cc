"""Automatic loss threshold: a windowed moving average of recent batch losses.

The threshold is only defined once the window holds a full ``window_size``
losses, and once frozen it never moves again.
"""

from __future__ import annotations

from collections import deque

import numpy as np


class ThresholdState:
    def __init__(self, window_size: int, skip_margin_gamma: float = 1.0):
        if window_size < 1:
            raise ValueError("window_size must be >= 1")
        if skip_margin_gamma <= 0:
            raise ValueError("skip_margin_gamma must be positive")
        self.window_size = int(window_size)
        self.skip_margin_gamma = float(skip_margin_gamma)
        self._window: deque[float] = deque(maxlen=self.window_size)
        self._frozen_value: float | None = None

    @property
    def frozen(self) -> bool:
        return self._frozen_value is not None

    @property
    def window_full(self) -> bool:
        return len(self._window) == self.window_size

    @property
    def l_low(self) -> float | None:
        """Mean of the last ``window_size`` losses; None until the window fills."""
        if self._frozen_value is not None:
            return self._frozen_value
        if not self.window_full:
            return None
        return sum(self._window) / self.window_size

    def observe(self, loss: float) -> None:
        """Push one batch loss, evicting the oldest once the window is full."""
        if self.frozen:
            raise ValueError("threshold frozen: no further losses accepted")
        if not np.isfinite(loss) or loss < 0:
            raise ValueError(f"loss must be finite and non-negative, got {loss!r}")
        self._window.append(float(loss))

    def variance(self) -> float | None:
        """Sample variance (n-1 denominator) of the window; None until full."""
        if not self.window_full:
            return None
        if self.window_size == 1:
            return 0.0
        return float(np.var(np.array(self._window), ddof=1))

    def is_stable(self, variance_tolerance: float) -> bool:
        if variance_tolerance < 0:
            raise ValueError("variance_tolerance must be >= 0")
        var = self.variance()
        return var is not None and var <= variance_tolerance

    def freeze(self, override: float | None = None) -> None:
        """Fix the threshold at its current value. Idempotent.

        ``override`` replaces the frozen value; it exists for diagnostics such
        as forcing the gate permanently open.
        """
        if self.frozen:
            return
        if not self.window_full:
            raise ValueError("cannot freeze with a partial window")
        self._frozen_value = float(override) if override is not None else self.l_low

    @property
    def skip_boundary(self) -> float:
        """The effective gate value: skip_margin_gamma * l_low."""
        value = self.l_low
        if value is None:
            raise ValueError("threshold undefined: window has never been full")
        return self.skip_margin_gamma * value

    def should_skip_backward(self, batch_loss: float) -> bool:
        """True when the loss falls strictly below the gate."""
        return batch_loss < self.skip_boundary
