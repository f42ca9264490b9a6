"""Smoke test for the Python bindings. Run with `python3 python/smoke_test.py` or pytest."""

import json
import math

import pyjointmeasure as jm


def statuses(report):
    return {v["condition"]: v["status"] for v in json.loads(report)["verdicts"]}


def test_pr_box():
    pr = jm.builtin_behaviour("pr-box")
    assert jm.is_consistent(pr)
    assert abs(jm.chsh_value(pr) - 4.0) < 1e-12
    got = statuses(jm.check(pr))
    assert got == {
        "jpm": "INFEASIBLE",
        "jqm": "FEASIBLE",
        "spjqm": "INFEASIBLE",
        "spjqmb": "INFEASIBLE",
        "q1": "INFEASIBLE",
        "q1ab": "INFEASIBLE",
    }


def test_isotropic_and_singlet():
    iso = jm.builtin_behaviour("isotropic", 0.6)
    assert abs(jm.chsh_value(iso) - 2.4) < 1e-12
    assert statuses(jm.check(iso, ["jpm", "q1"])) == {"jpm": "INFEASIBLE", "q1": "FEASIBLE"}
    singlet = jm.builtin_behaviour("singlet")
    assert abs(jm.chsh_value(singlet) - 2 * math.sqrt(2)) < 1e-9
    assert abs(jm.tlm_margin(singlet)) < 1e-9


def test_compose():
    u = jm.builtin_behaviour("uniform")
    both = json.loads(jm.compose([u, u]))
    assert all(len(t) == 16 for t in both["probs"].values())


if __name__ == "__main__":
    test_pr_box()
    test_isotropic_and_singlet()
    test_compose()
    print("ok")
