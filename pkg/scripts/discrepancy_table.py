"""Exact star discrepancy overhead table for n=125 designs in [0,1]^4.

Halton, Braaten-Weller and (if available) the searched best generalized Halton
are deterministic; LHS and uniform rows average ``--draws`` seeded designs.

    python scripts/discrepancy_table.py --draws 10
"""

import argparse
from importlib import resources

from oneshot.discrepancy import overhead_table
from oneshot.generators import GeneratorSpec, braaten_weller, generate, halton, load_permutations


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=125)
    parser.add_argument("--dim", type=int, default=4)
    parser.add_argument("--draws", type=int, default=10)
    parser.add_argument("--perm-file", help="permutations of a searched generator (default: bundled n=125 d=4)")
    args = parser.parse_args(argv)

    n, d = args.n, args.dim
    designs = {
        "halton": generate(halton(d), n, d),
        "braaten-weller": generate(braaten_weller(d), n, d),
    }
    perm_file = args.perm_file
    if perm_file is None and (n, d) == (125, 4):
        perm_file = resources.files("oneshot") / "data" / "best_n125_d4.perm"
    if perm_file is not None:
        bases, perms = load_permutations(perm_file)
        designs["searched-gh"] = generate(GeneratorSpec("gh", bases[:d], perms[:d]), n, d)
    for kind in ("lhs", "uniform"):
        designs[kind] = [generate(GeneratorSpec(kind, seed=s), n, d) for s in range(args.draws)]

    print(f"{'design':<16} {'D*':>10} {'overhead':>9}")
    for name, value, overhead in overhead_table(designs):
        print(f"{name:<16} {value:>10.6f} {overhead:>8.1f}%")


if __name__ == "__main__":
    main()
