"""Smoke test for the xattr_py extension module.

Build and install first:
    pip install --no-build-isolation ./crates/python
then run:
    python python/smoke_test.py
"""

import math
import os
import tempfile

import xattr_py as xa


def main():
    data = xa.Dataset.synth_credit(400, seed=0)
    assert len(data) == 400
    assert "age" in data.feature_names

    net = xa.train_tabular(data, seed=0)
    assert net.input_len == len(data.feature_names)
    x = data.rows[0]
    p = net.predict(x)[0]
    assert 0.0 <= p <= 1.0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.txt")
        net.save(path)
        again = xa.Network.load(path)
        assert again.predict(x) == net.predict(x)
        data.write_csv(os.path.join(d, "data.csv"))
        assert len(xa.Dataset.read_csv(os.path.join(d, "data.csv"))) == 400

    background = data.rows[:20]
    exact = xa.shapley_exact(net, x, background, feature_names=data.feature_names)
    total = exact["phi0"] + sum(exact["phi"])
    assert math.isclose(total, p, abs_tol=1e-8), (total, p)

    sampled = xa.shapley_sampled(net, x, background, permutations=100, seed=1)
    assert len(sampled["stderr"]) == len(x)

    ig = xa.integrated_gradients(net, x, steps=128)
    assert ig["completeness_gap"] <= 1e-2 * max(abs(ig["output_value"] - ig["baseline_value"]), 1e-12)

    relevance = xa.lrp(net, x, rule="epsilon")
    assert len(relevance) == len(x)

    row = next(i for i, r in enumerate(data.rows) if net.predict(r)[0] < 0.3)
    cfs = xa.counterfactuals(net, data, row, desired=1, immutable=["age"])
    age = data.feature_names.index("age")
    assert all(c[age] == data.rows[row][age] for c in cfs["candidates"])
    print("valid counterfactuals:", sum(cfs["valid"]), "of", len(cfs["valid"]))

    recid = xa.Dataset.synth_recidivism(300, bias=1.0, seed=0)
    model = xa.train_tabular(recid)
    degree = xa.formula_degree(model, recid, "forall x: implies(label(x), label(x))")
    assert math.isclose(degree, 1.0, abs_tol=1e-9), degree

    try:
        xa.formula_degree(model, recid, "forall x: equiv(P(x), label(x)")
    except ValueError as e:
        print("parse error reported:", e)
    else:
        raise AssertionError("malformed formula accepted")

    text = xa.explain_violation([("cold_cuts", 0.4), ("water", 0.01)], "cold_cuts", 5, 2, age=65)
    assert text.startswith("This week you consumed too much (5 portions of a maximum 2) cold cuts."), text
    print(text)
    print("smoke test passed")


if __name__ == "__main__":
    main()
