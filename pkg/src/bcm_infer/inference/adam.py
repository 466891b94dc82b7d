"""Adaptive moment estimation for numpy parameter arrays."""

from typing import Optional

import numpy as np


class AdamOptimizer:
    """
    Elementwise Adam update.

    Rows of a batched parameter array are optimised independently: the moment
    estimates are per element and a ``mask`` freezes whole rows, so one array
    can carry several restarts without them interacting.
    """

    def __init__(
        self,
        shape: tuple[int, ...],
        learning_rate: float = 0.05,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        """
        Initialize optimizer state.

        Args:
            shape: Shape of the parameter array
            learning_rate: Step size
            beta1: Decay of the first-moment estimate
            beta2: Decay of the second-moment estimate
            eps: Denominator floor
        """
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape, dtype=np.float64)
        self.v = np.zeros(shape, dtype=np.float64)
        self.iter = 0

    def step(
        self, params: np.ndarray, grad: np.ndarray, mask: Optional[np.ndarray] = None
    ) -> np.ndarray:
        """
        Return updated parameters.

        Args:
            params: Current parameters
            grad: Gradient of the objective (same shape)
            mask: Optional boolean vector over the first axis; False rows stay frozen

        Returns:
            New parameter array
        """
        self.iter += 1
        m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        v = self.beta2 * self.v + (1.0 - self.beta2) * np.square(grad)

        m_hat = m / (1.0 - self.beta1**self.iter)
        v_hat = v / (1.0 - self.beta2**self.iter)
        update = -self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)

        if mask is not None:
            keep = np.asarray(mask, dtype=bool).reshape((-1,) + (1,) * (params.ndim - 1))
            m = np.where(keep, m, self.m)
            v = np.where(keep, v, self.v)
            update = np.where(keep, update, 0.0)

        self.m = m
        self.v = v
        return params + update
