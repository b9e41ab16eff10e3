"""Two-layer GELU embedding MLP on a hand-set 2x2 fixture, evaluated with exact erf."""
import math

from common import emit


def gelu(x):
    return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))


W1 = [[0.5, -1.0], [2.0, 0.25]]
b1 = [0.1, -0.2]
W2 = [[1.0, -0.5], [0.75, 1.5]]
b2 = [0.0, 0.3]


def mlp(c):
    h = [gelu(sum(W1[i][j] * c[j] for j in range(2)) + b1[i]) for i in range(2)]
    return [gelu(sum(W2[i][j] * h[j] for j in range(2)) + b2[i]) for i in range(2)]


emit("gelu_mlp", {"W1": W1, "b1": b1, "W2": W2, "b2": b2,
                  "c10": mlp([1.0, 0.0]), "c01": mlp([0.0, 1.0]), "masked": mlp([0.0, 0.0])})
