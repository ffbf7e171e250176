"""Monte-Carlo ceiling for the aligned mean cosine of unrelated unit rows.

Draws independent Gaussian rows (normalized) for T and E, fits the
orthogonal Procrustes map with scipy, and reports the mean cosine over
many seeds. The acceptance suite freezes the ceiling printed here.
"""

import numpy as np
from scipy.linalg import orthogonal_procrustes

N, D, SEEDS = 1000, 16, 50


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def mean_cosine(t, e, q):
    tq = t @ q
    cos = np.sum(tq * e, axis=1) / (np.linalg.norm(tq, axis=1) * np.linalg.norm(e, axis=1))
    return float(cos.mean())


def main():
    values = []
    for seed in range(SEEDS):
        rng = np.random.default_rng(seed)
        t, e = unit_rows(rng, N, D), unit_rows(rng, N, D)
        q, _ = orthogonal_procrustes(t, e)
        values.append(mean_cosine(t, e, q))
    values = np.array(values)
    print(f"seeds={SEEDS} N={N} d={D}")
    print(f"mean={values.mean():.6f} sd={values.std(ddof=1):.6f} max={values.max():.6f}")
    print(f"ceiling(mean + 6 sd)={values.mean() + 6 * values.std(ddof=1):.6f}")


if __name__ == "__main__":
    main()
