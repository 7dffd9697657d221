"""Smoke test for the Python extension: build, verify, embed."""

import math

import tljtower


def main():
    d, dims = tljtower.frobenius_perron("A3")
    assert abs(d - math.sqrt(2)) < 1e-12
    assert dict(dims)["v1"] > 1.0

    t = tljtower.Tower("E6", 8)
    assert t.dims[:3] == [1, 1, 2]
    report = t.verify(tolerance=1e-9, seed=1)
    assert all(c["pass"] for c in report["checks"]), report["title"]
    pg = t.principal_graph()
    assert pg["isomorphic_to_input"] and len(pg["labels"]) == 6

    a3 = tljtower.Tower('{"even":["v0","v2"],"odd":["v1"],"edges":[["v0","v1",1],["v2","v1",1]],"basepoint":"v0"}', 6)
    pc = a3.projcat(samples=2)
    assert all(c["pass"] for c in pc["checks"])

    emb = tljtower.embed("A3", n=3)
    assert all(c["pass"] for c in emb["checks"])
    assert [tljtower.generic_dimension(n) for n in range(6)] == [1, 1, 2, 5, 14, 42]
    print("smoke test passed:", repr(t))


if __name__ == "__main__":
    main()
