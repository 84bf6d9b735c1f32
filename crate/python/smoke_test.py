#!/usr/bin/env python3
"""Import the compiled extension and pin a handful of exact values.

Builds nothing itself: run `cargo build -p specstab-python --release`
first (or pass the path to an already-built cdylib).

    python3 python/smoke_test.py [path/to/libspecstab_py.so]
"""

import json
import shutil
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def locate_cdylib() -> Path:
    if len(sys.argv) > 1:
        return Path(sys.argv[1])
    for profile in ("release", "debug"):
        cand = ROOT / "target" / profile / "libspecstab_py.so"
        if cand.exists():
            return cand
    sys.exit("no built extension found; run: cargo build -p specstab-python --release")


def main() -> None:
    cdylib = locate_cdylib()
    tmp = Path(tempfile.mkdtemp(prefix="specstab-py-"))
    shutil.copy2(cdylib, tmp / "specstab_py.so")
    sys.path.insert(0, str(tmp))
    import specstab_py as st

    checks = 0

    def check(cond, label):
        nonlocal checks
        assert cond, label
        checks += 1

    # Group arithmetic in Z/2 x Z/4.
    g = st.Group([2, 4])
    check(g.order == 8 and g.rank == 2 and len(g) == 8, "group shape")
    check(g.coords(5) == [1, 1], "mixed-radix coords")
    check(g.index([1, 1]) == 5, "coords round-trip")
    check(g.add(5, 7) == 0 and g.add(5, 6) == g.index([0, 3]), "componentwise add")
    check(g.neg(g.neg(3)) == 3, "negation involution")
    re, im = g.char_value(1, 1)
    check(abs(re) < 1e-12 and abs(im - 1.0) < 1e-12, "quarter turn character")
    re, im = g.char_value(4, 4)
    check(abs(re + 1.0) < 1e-12 and abs(im) < 1e-12, "half turn character")

    # A = {0, 4} in Z/8 is a subgroup: energy and doubling are exact.
    z8 = st.Group.cyclic(8)
    e = st.energy(z8, [0, 4])
    check(e.combinatorial == 8, "energy count")
    check(Fraction(*e.lower_bound) == 8 and e.upper_bound == 8, "energy bounds tight")
    check(e.lower_ok and e.upper_ok and e.rel_residual <= 1e-12, "energy checks")
    check(Fraction(*st.doubling(z8, [0, 4])) == 1, "subgroup doubling")
    check(st.sumset(z8, [0, 4], [0, 4]) == [0, 4], "subgroup sumset")

    # Its large spectrum at tau = 1 is the annihilator, the even frequencies.
    threshold, members = st.large_spectrum(z8, [0, 4], 1.0)
    check(members == [0, 2, 4, 6], "annihilator spectrum")
    check(abs(threshold - 0.25) < 1e-12, "threshold = tau * alpha")
    mags = st.dft_magnitudes(z8, [0, 4])
    check(all(abs(m - 0.25) < 1e-12 for m in (mags[0], mags[2])), "flat on annihilator")
    check(abs(mags[1]) < 1e-12, "zero off annihilator")

    # Bohr set B({1}, 0.1) in Z/97.
    z97 = st.Group.cyclic(97)
    check(st.bohr_set(z97, [1], 0.1) == [0, 1, 96], "pinned Bohr set")

    # Packet machinery at the pinned size formula.
    check(st.packet_size(5, 0.2, 0.05, 2.0) == 265, "packet size formula")
    pkt = st.sample_packet(z97, [1, 2], 0.2, 0.05, 7)
    check(pkt.success and len(pkt) == st.packet_size(2, 0.2, 0.05, 2.0), "packet sampled")
    shifts = json.loads(st.good_shifts(z97, list(range(24)), pkt))
    check(shifts["identity_residual"] <= 1e-8, "shift averaging identity")

    # One dichotomy step on a subgroup lands on the coset branch.
    step = json.loads(st.dichotomy_step(z8, [0, 4]))
    check("NearCoset" in step["outcome"], "subgroup is its own near-coset")

    # The steered improvement chain in Z/12.
    trace = json.loads(st.iterate(z12 := st.Group.cyclic(12), [0, 1, 3, 7], 'c = 3.0'))
    check(trace["steps"][0]["outcome"] == "improvement", "steered improvement fires")
    check(len(trace["steps"]) == 2 and trace["violations"] == [], "clean two-step trace")
    k0 = Fraction(trace["steps"][0]["doubling"])
    k1 = Fraction(trace["steps"][1]["doubling"])
    check(k0 == Fraction(9, 4) and k1 == Fraction(5, 3), "exact doubling decrement")

    # Quotient lift audit through <6> reads the known discrepancy.
    lift = json.loads(st.quotient_lift(z12, [0, 1], [6]))
    check(lift["max_averaged_residual"] <= 1e-10, "averaged lift identity")
    check(lift["indicator_discrepancies"] > 0, "indicator reading differs")

    # The interval toy in Z/97.
    toy = json.loads(st.toy_example(24, 97, 3))
    check(toy["sumset_size"] == 47, "toy sumset")
    check(toy["profile_ok"] and toy["spectrum_is_symmetric_interval"], "toy profile")

    # Analyze and a small scan, both as structured JSON.
    rep = json.loads(st.analyze(z8, [0, 4]))
    check(rep["report"]["alpha"] == "1/4", "analyze alpha")
    sc = json.loads(st.scan([[12]], 2, 42))
    lemmas = {f["lemma"] for f in sc["findings"]}
    check("quotient-lift-reading" in lemmas, "scan reaches the lift reading")
    check(sc["summary"]["instances"] == 78, "scan instance count")

    print(f"smoke test: {checks} checks passed")


if __name__ == "__main__":
    main()
