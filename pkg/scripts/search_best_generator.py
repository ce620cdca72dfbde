"""Exhaustive search for the generalized Halton generator with the smallest exact D*.

For d=4 this walks all 34,560 digit-permutation tuples and takes about 20 minutes on
one core. The winner is written as a permutation file usable with
``oneshot generate --kind gh --perm-file``.

    python scripts/search_best_generator.py --n 125 --dim 4 --out best_n125_d4.perm
"""

import argparse
import sys
import time

from oneshot.generators import count_generalized_halton, format_permutations, search_best_generator


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=125)
    parser.add_argument("--dim", type=int, default=4)
    parser.add_argument("--budget", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--every", type=int, default=500, help="progress interval")
    args = parser.parse_args(argv)

    total = args.budget or count_generalized_halton(args.dim)
    start = time.time()

    def progress(count, perms, value, best):
        if count % args.every == 0 or count + 1 == total:
            rate = (count + 1) / (time.time() - start)
            print(f"{count + 1:>6}/{total}  best={best:.6f}  {rate:.2f} tuples/s", flush=True)

    spec, value = search_best_generator(args.n, args.dim, args.budget, progress)
    text = format_permutations(spec.bases, spec.permutations)
    header = f"# best generalized Halton for n={args.n}, d={args.dim}: exact D* = {value!r}\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(header + text)
    sys.stdout.write(header + text)


if __name__ == "__main__":
    main()
