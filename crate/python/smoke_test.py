"""Smoke test for the permgd Python extension.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/permgd-*.whl
"""

import math

import permgd


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def main():
    p = permgd.Problem.signed_example(4, 1.0)
    assert p.dimension == 1 and p.component_count == 4
    assert p.component_gradient(0, [0.5]) == [1.5]
    assert p.component_gradient(3, [0.5]) == [-0.5]
    assert close(p.value([2.0]), 2.0)

    order = permgd.greedy_order(p, [0.3])
    assert order == [0, 2, 1, 3], order
    assert permgd.phi_curve(p, order, [0.3]) == [1.0, 0.0, 1.0, 0.0]
    assert permgd.sigma_star(p, [0, 1, 2, 3], [0.0]) == 4.0
    assert permgd.sample_bias_ratio(p, order, [[0.3], [1.0]]) == 0.0

    seq = permgd.two_level_k_shuffle(2, 4, 2, seed=0)
    assert sorted(seq) == list(range(8)), seq
    assert sorted(permgd.random_permutation(10, seed=3)) == list(range(10))

    b = permgd.Problem.band_quadratic(3, 0.2, 1.0, 10.0, 4)
    assert b.component_count == 8
    assert close(b.smoothness, 2 + math.sqrt(2) + 0.2, 1e-9)

    bound = permgd.convergence_bound(1.0, 1.0, 4.0, 10.0, 0.01, sigma_star_sq=1.0)
    assert close(bound, 8 / (4 * 10 * 0.01) + 32 * 0.01**2)
    try:
        permgd.convergence_bound(1.0, 1.0, 4.0, 10.0, 1.0, sigma_star_sq=1.0)
    except ArithmeticError:
        pass
    else:
        raise AssertionError("step-size condition not enforced")

    r = permgd.run(p, "ig", gamma=0.1, epochs=1, x0=[0.0], order=[0, 2, 1, 3])
    assert r["total_steps"] == 4 and not r["diverged"]

    two = permgd.Problem.signed_example(2, 1.0)
    r = permgd.run(two, "ig", gamma=0.1, epochs=1, x0=[0.0])
    assert close(r["final_x"][0], 0.01), r["final_x"]

    q = permgd.Problem.signed_example(2, 0.0)
    best, steps = permgd.tune_lr(q, "rr", [1.0, 0.1], [1, 2, 3], epochs=100, target=0.2, x0=[1.0])
    assert best == 1.0 and steps == 1.0, (best, steps)
    assert len(permgd.default_lr_grid()) == 20

    c = permgd.Problem.classification(3, 30, 5, 10, seed=7)
    r = permgd.run(c, "greedy", gamma=0.1, epochs=3, x0=[0.0] * c.dimension)
    assert r["final_f"] < c.value([0.0] * c.dimension)

    try:
        permgd.Problem.signed_example(3, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("odd N accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
