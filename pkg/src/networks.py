"""
Fully-connected networks with hand-written backpropagation, plus optimizers.

Batches are row-major: inputs have shape (N, in_dim), outputs (N, out_dim).
"""
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

FINAL_LAYER_INIT = 3e-3


class Mlp:
    """
    Multilayer perceptron with tanh hidden layers.

    The output layer is either the identity (critic) or tanh scaled by
    `output_scale` (actor), which keeps every output inside the bounds.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        output_activation: str = 'identity',
        output_scale: float = 1.0,
        rng: Optional[np.random.Generator] = None
    ):
        if len(sizes) < 2 or any(int(n) < 1 for n in sizes):
            raise ValueError(f"Layer sizes must have at least two positive entries, got {list(sizes)}")
        if output_activation not in ('identity', 'tanh'):
            raise ValueError(f"Unknown output activation {output_activation!r}")
        self.sizes = [int(n) for n in sizes]
        self.output_activation = output_activation
        self.output_scale = float(output_scale)
        rng = rng if rng is not None else np.random.default_rng(0)

        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        last = len(self.sizes) - 2
        for layer, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            # Glorot uniform, except a small final layer
            limit = FINAL_LAYER_INIT if layer == last else np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def parameters(self) -> List[np.ndarray]:
        """W0, b0, W1, b1, ... as live references."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        Args:
            x: Input batch (N, in_dim)

        Returns:
            (output batch, cache for backward)
        """
        h = np.atleast_2d(np.asarray(x, dtype=float))
        cache = [h]
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if layer < last or self.output_activation == 'tanh':
                h = np.tanh(z)
            else:
                h = z
            cache.append(h)
        y = h * self.output_scale if self.output_activation == 'tanh' else h
        return y, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: List[np.ndarray], dy: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """
        Reverse pass for the scalar sum(dy * y).

        Returns:
            (gradients aligned with parameters(), gradient w.r.t. the input)
        """
        grads: List[np.ndarray] = [None] * (2 * len(self.weights))
        last = len(self.weights) - 1
        delta = np.asarray(dy, dtype=float)
        for layer in range(last, -1, -1):
            out = cache[layer + 1]
            if layer < last:
                delta = delta * (1.0 - out ** 2)
            elif self.output_activation == 'tanh':
                delta = delta * self.output_scale * (1.0 - out ** 2)
            h_in = cache[layer]
            grads[2 * layer] = h_in.T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[layer].T
        return grads, delta

    def copy(self) -> 'Mlp':
        clone = Mlp.__new__(Mlp)
        clone.sizes = list(self.sizes)
        clone.output_activation = self.output_activation
        clone.output_scale = self.output_scale
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def same_architecture(self, other: 'Mlp') -> bool:
        return (self.sizes == other.sizes
                and self.output_activation == other.output_activation
                and self.output_scale == other.output_scale)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def to_dict(self) -> Dict[str, Any]:
        return {
            'sizes': list(self.sizes),
            'output_activation': self.output_activation,
            'output_scale': self.output_scale,
            'weights': [w.tolist() for w in self.weights],
            'biases': [b.tolist() for b in self.biases]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Mlp':
        net = cls(data['sizes'], data['output_activation'], data['output_scale'])
        weights = [np.array(w, dtype=float) for w in data['weights']]
        biases = [np.array(b, dtype=float) for b in data['biases']]
        if [w.shape for w in weights] != [w.shape for w in net.weights]:
            raise ValueError("Stored weights do not match the declared layer sizes")
        if [b.shape for b in biases] != [b.shape for b in net.biases]:
            raise ValueError("Stored biases do not match the declared layer sizes")
        net.weights, net.biases = weights, biases
        return net


class Sgd:
    """Plain gradient step, in place."""

    def __init__(self, params: List[np.ndarray], lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: List[np.ndarray]):
        for p, g in zip(self.params, grads):
            p -= self.lr * g


class Adam:
    """Adam with bias correction, in place."""

    def __init__(
        self,
        params: List[np.ndarray],
        lr: float,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8
    ):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: List[np.ndarray]):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def make_optimizer(kind: str, params: List[np.ndarray], lr: float, betas=(0.9, 0.999), eps=1e-8):
    if kind == 'adam':
        return Adam(params, lr, betas, eps)
    if kind == 'sgd':
        return Sgd(params, lr)
    raise ValueError(f"Unknown optimizer {kind!r}")
