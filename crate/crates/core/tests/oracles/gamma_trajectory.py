# Standalone iteration of the gamma-correction normalization on a uniform brain
# value (float32 storage between iterations, float64 arithmetic).
import numpy as np

def run(x0, mu=128.0, eps=0.5, max_iter=100):
    x = np.float32(x0)
    it = 0
    while abs(float(x) - mu) > eps and it < max_iter:
        g = mu / float(x)
        x = np.float32(255.0 * (float(x) / 255.0) ** (1.0 / g))
        it += 1
        print(it, repr(float(x)))
    return it, float(x)

for x0 in [128.0, 64.0, 30.0]:
    print(x0, run(x0))
