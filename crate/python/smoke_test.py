"""Smoke test of the pydgasm extension module.

Build and install it first:
    pip install --no-build-isolation -e crates/python
then run:
    python python/smoke_test.py
"""

import json

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre

import pydgasm


def check_lgl():
    p = 6
    nodes, weights = pydgasm.lgl(p)
    interior = np.sort(legendre.legroots(legendre.legder([0] * p + [1])))
    assert np.allclose(nodes, np.concatenate([[-1.0], interior, [1.0]]), atol=1e-14)
    assert abs(sum(weights) - 2.0) < 1e-14
    assert abs(weights[0] - 2.0 / (p * (p + 1))) < 1e-15
    # exact up to degree 2p - 1, mapped interval
    nodes, weights = pydgasm.lgl(p, 0.0, 2.0)
    x, w = np.array(nodes), np.array(weights)
    assert abs(w @ x ** (2 * p - 1) - 2.0 ** (2 * p) / (2 * p)) < 1e-10


def check_dyadic():
    assert pydgasm.dyadic_nodes(3) == [-1.0, 0.0, 1.0]
    nodes = pydgasm.dyadic_nodes(16, alpha=1.2)
    assert nodes == sorted(nodes) and nodes[0] == -1.0 and nodes[-1] == 1.0
    # every breakpoint is a dyadic rational on [0, 1]
    for t in (np.array(nodes) + 1.0) / 2.0:
        assert (t * 2**20).is_integer()


def check_discretization():
    disc = pydgasm.Discretization([2] * 9)
    assert (disc.ndof_dg, disc.ndof_cg) == (81, 25)
    for rows, cols, vals in (disc.dg_matrix(), disc.cg_matrix()):
        n = max(rows) + 1
        a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n)).toarray()
        assert np.allclose(a, a.T, atol=1e-12)
        assert np.linalg.eigvalsh(a).min() > 0.0


def check_experiment():
    exp = pydgasm.Experiment(json.dumps({"scenario": "adaptation", "p_values": [2, 3], "stage": "stage1-exact"}))
    assert exp.points() == [(2, 0.15, 1.25), (3, 0.15, 1.25)]
    rows = exp.run()
    assert [r["p"] for r in rows] == [2, 3]
    assert all(r.get("error") is None and r["kappa"] > 1.0 for r in rows)
    csv = exp.run_csv()
    assert csv.splitlines()[0] == pydgasm.csv_header()
    assert len(csv.splitlines()) == 3

    tuned = exp.with_overrides(["beta1=0.3", "p_values=[2]"])
    assert json.loads(tuned.to_json())["beta1"] == 0.3

    # the same point measured directly agrees with the sweep row
    disc = pydgasm.Discretization([2, 3, 5, 3, 5, 9, 5, 9, 17])
    m = disc.measure(exp)
    assert m["converged"]
    assert abs(m["kappa"] - rows[0]["kappa"]) <= 1e-12 * rows[0]["kappa"]

    try:
        pydgasm.Experiment('{"scenario": "adaptation", "p_values": [2], "stage": "stage1-exact", "gama": 3}')
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")


def check_convergence():
    errors = [pydgasm.sine_problem_error(p) for p in (2, 4, 6)]
    assert errors[0] > errors[1] > errors[2]


if __name__ == "__main__":
    check_lgl()
    check_dyadic()
    check_discretization()
    check_experiment()
    check_convergence()
    print("smoke test passed")
