"""Smoke test for the pyapproxviol extension module.

Build first:
    cargo build -p approxviol-py --release --features extension-module
    cp target/release/libpyapproxviol.so python/pyapproxviol.so
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyapproxviol as av


def main():
    net = av.Mlp([13, 64, 64, 5], seed=1)
    assert net.layer_sizes == [13, 64, 64, 5]
    x = [1.0] * 11 + [0.5, 0.0]
    y = net.forward(x)
    assert len(y) == 5 and all(math.isfinite(v) for v in y)
    assert net.forward_batch([x, x]) == [y, y]

    props = av.PropertySet.navigation()
    assert len(props) == 3
    front = [1.0] * 11 + [0.5, 0.0]
    front[5] = 0.02
    assert props.active(front) == [0]
    assert props.active(x) == []

    v, active = av.approximate_violation(net, props, front, m=2000, seed=3)
    assert active == 1 and 0.0 <= v <= 1.0
    v0, active0 = av.approximate_violation(net, props, x)
    assert (v0, active0) == (0.0, 0)

    lo, hi, boxes, exhausted = av.formal_violation(net, props, 0, gap=0.2, max_boxes=20000)
    assert 0.0 <= lo <= hi <= 1.0 and boxes > 0
    print(f"p_front: estimate {v:.4f}, formal [{lo:.4f}, {hi:.4f}] after {boxes} boxes")

    assert props.add_online(x, 4)
    assert not props.add_online(x, 4)
    assert len(props) == 4

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "net.json")
        net.save(path)
        assert av.Mlp.load(path).forward(x) == y
        ppath = os.path.join(d, "props.json")
        props.save(ppath)
        assert len(av.PropertySet.load(ppath)) == 4

    env = av.NavEnv("Fixed_obs_NT", seed=7)
    obs = env.reset()
    assert len(obs) == 13
    total_cost = 0.0
    for t in range(200):
        obs, reward, cost, done, outcome = env.step(t % 5)
        total_cost += cost
        if done:
            break
    print(f"env: {t + 1} steps, cost {total_cost}, last outcome {outcome}, pose {env.pose}")

    assert av.apply_penalty(1.0, 1.0, 0.25, "violation", 2.0) == 0.5
    assert av.apply_penalty(1.0, 1.0, 0.25, "cost", 2.0) == -1.0
    adv, ret = av.gae([1.0, 1.0], [0.0, 0.0], [False, True], gamma=0.5, lam=1.0)
    assert ret == [1.5, 1.0]

    try:
        net.forward([0.0] * 3)
    except ValueError:
        pass
    else:
        raise AssertionError("dimension mismatch not raised")

    print("smoke test passed")


if __name__ == "__main__":
    main()
