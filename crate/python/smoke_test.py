"""Smoke test for the pyspdkmeans extension module.

Build and run from the repository root:

    cargo build --release -p spdkmeans-python --features extension-module
    cp target/release/libpyspdkmeans.so python/pyspdkmeans.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyspdkmeans as sk


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    a = [[4.0, 2.0], [2.0, 3.0]]
    b = [[1.0, 0.0], [0.0, 2.0]]

    l = sk.cholesky(a)
    assert close(l[0][0], 2.0) and close(l[1][0], 1.0) and close(l[1][1], math.sqrt(2.0))

    v = sk.embed(a)
    assert close(v[0], 1.0) and close(v[1], math.log(2.0)) and close(v[2], 0.5 * math.log(2.0))
    back = sk.unembed(v)
    assert all(close(back[i][j], a[i][j]) for i in range(2) for j in range(2))

    d = sk.log_cholesky_distance(a, b)
    e = math.dist(sk.embed(a), sk.embed(b))
    assert close(d, e)

    mean = sk.frechet_mean([a, b])
    va, vb = sk.embed(a), sk.embed(b)
    assert all(close(x, (p + q) / 2) for x, p, q in zip(sk.embed(mean), va, vb))

    s = sk.matrix_function(sk.matrix_function(a, "log"), "exp")
    assert all(close(s[i][j], a[i][j], 1e-10) for i in range(2) for j in range(2))

    assert sk.autocov_matrix([1.0, 3.0], 0, 0.0) == [[1.0]]
    assert sk.autocov_matrix([0.0, 1.0, 0.0, 1.0], 1, 0.0) == [[0.25, -0.1875], [-0.1875, 0.25]]
    assert close(sk.adjusted_rand([1, 1, 2, 2], [1, 1, 2, 3]), 4 / 7)
    assert close(sk.sargde_v1([0.4, 0.6], [1.0, 3.0]), 10.0)
    r2, r2_adj = sk.anova_r2([1.0, 1.1, 5.0, 5.2], [0, 0, 1, 1])
    assert 0.99 < r2 <= 1.0 and r2_adj <= r2

    pts = [[0.0], [0.1], [10.0], [10.1]]
    model = sk.kmeans_fit(pts, 2, restarts=4, seed=1)
    assert close(model.objective, 0.0025)
    assert model.labels[0] == model.labels[1] != model.labels[2] == model.labels[3]

    mats = [sk.sample_spd(3, seed, 0.2) for seed in range(30)]
    model, centers = sk.kmeans_fit_spd(mats, 1)
    fm = sk.frechet_mean(mats)
    assert all(close(centers[0][i][j], fm[i][j], 1e-9) for i in range(3) for j in range(3))

    k_star, rows = sk.select_k(pts, [1, 2, 3], restarts=2, seed=0)
    assert k_star == 2 and [r[0] for r in rows] == [1, 2, 3]

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "t.spdk")
        sk.write_tensor(path, [2, 3], [0.5, 1.0, float("nan"), -2.0, 3.25, 1e300])
        dims, data = sk.read_tensor(path)
        assert dims == [2, 3] and math.isnan(data[2]) and data[5] == 1e300

    for bad in (lambda: sk.embed([[1.0, 2.0], [2.0, 1.0]]), lambda: sk.kmeans_fit(pts, 5)):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    print(f"pyspdkmeans {sk.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
