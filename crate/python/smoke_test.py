"""Smoke test for the pywsr extension.

Build first:  pip install --no-build-isolation ./crates/python
"""
import math
import pathlib
import tempfile

import pywsr

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    model = pywsr.ForwardModel(16, 1.0)
    assert (model.rows, model.cols) == (64, 289)

    # constant source: the boundary response is M^{1/2} applied to 1/eps
    y = model.apply([1.0] * model.cols)
    assert all(math.isfinite(v) for v in y)

    op = pywsr.WeightedOperator(model, "trunc_pinv", k=64)
    j = model.locate_node(0.375, 0.625)
    assert op.argmax_source(j) == j

    alpha = 0.1 * op.weights()[j]
    b = op.image(j)
    r = pywsr.solve_weighted_lasso(op, b, alpha)
    assert r["converged"], r["kkt_residual"]
    exact = pywsr.closed_form_single_source(op, j, alpha)
    assert max(abs(a - e) for a, e in zip(r["x"], exact)) <= 1e-8 * max(map(abs, exact))

    cert = pywsr.dual_certificate(op, [(j, 1.0)])
    assert cert["valid"]

    q = pywsr.q_closed_form_solution(0.5, 3)
    assert len(q) == 3

    lines = pywsr.verify("certificates")
    assert all(ok for ok, _ in lines), lines

    with tempfile.TemporaryDirectory() as out:
        summary = pywsr.run_scenario(ROOT / "scenarios" / "intro_weighted_random.json", out)
        assert summary["converged"]
        assert (pathlib.Path(out) / "solution.csv").exists()

    try:
        pywsr.parse_config('{"name": "x", "bogus": 1}')
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    print("pywsr smoke test passed")


if __name__ == "__main__":
    main()
