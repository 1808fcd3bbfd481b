"""Smoke test for the perc_bound extension module.

Build and run:
    cargo build --release -p perc-py --features extension-module
    cp target/release/libperc_bound.so python/perc_bound.so
    python3 python/smoke_test.py
"""

import perc_bound as pb

model = pb.Model("bond-vl2")
assert model.arity == 1

space = pb.StateSpace(model, "2")
assert len(space) == 2
m = space.mean_matrix()
p = 0.4
dense = m.dense([p])
expected = [[2 * p - p * p, p * p], [2 * p * (1 - p) ** 2, p * p * (3 - 2 * p)]]
for row, want in zip(dense, expected):
    for a, b in zip(row, want):
        assert abs(a - b) < 1e-12, (dense, expected)

rho, converged = m.spectral_radius([p])
assert converged and 0.0 < rho < 1.0
assert m.is_subcritical([0.3])
assert not m.is_subcritical([0.7])

r = pb.lower_bound("bond-vl2", "6")
# below the true threshold of about 0.6447
assert 0.6 < r.bound < 0.6447, r
assert r.state_count == 32

reach = pb.exact_reach_probability("bond-vl2", 1, [0.5])
assert abs(reach - 0.75) < 1e-12
assert reach <= m.expected_alive([0.5], 1) + 1e-12

est, lo, hi = pb.mc_survival("bond-vl2", [0.5], 10, 2000, 7)
assert lo <= est <= hi

try:
    pb.Model("no-such-model")
except ValueError:
    pass
else:
    raise AssertionError("bad model id accepted")

print("smoke test ok:", r)
