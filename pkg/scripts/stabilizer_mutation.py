"""Compare the stabilizer weights h^-3, h^-1 with the mutated pair h^-2, h^-1.

Prints the oracle battery and the s2 convergence rates for both choices.
The oracles involve no stabilizer weight, so they pass either way; the
stabilizer value on a single cell is what tells the two apart.
"""

from lswg.mesh import generate
from lswg.verify import convergence_study, get_solution, oracle_suite
from lswg.wgcore import WgConfig


def main() -> None:
    s2 = get_solution("s2")
    for powers in ((3, 1), (2, 1)):
        cfg = WgConfig(m=2, k2=10.0, stab_powers=powers)
        print(f"== stabilizer powers h^-{powers[0]}, h^-{powers[1]}")
        for line in oracle_suite(generate("tri_uniform", 2), cfg).lines():
            print("  " + line)
        for r in convergence_study(s2, "tri_uniform", [4, 5, 6], cfg, method="direct"):
            rates = "" if r.l2_rate is None else f"  rates l2 {r.l2_rate:.2f} wlap {r.wlap_rate:.2f}"
            print(f"  level {r.grid_level}: l2 {r.l2_err:.3e} wlap {r.wlap_err:.3e}{rates}")


if __name__ == "__main__":
    main()
