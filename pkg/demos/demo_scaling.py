"""
How construction cost grows with the problem size
=================================================

Sampling an exact kernel costs O(n^2) per product.  To time the
construction itself, each size first builds a reference H2 matrix (untimed)
and then samples that instead, which is what ``run_bench`` does.
"""

from h2sketch.bench import RunConfig, run_bench, write_csv

rows = run_bench(RunConfig(points="random"), [2**12, 2**13, 2**14])
print(write_csv(rows))

for a, b in zip(rows, rows[1:]):
    print(
        f"n {a['n']} -> {b['n']}: time x{b['time_total'] / a['time_total']:.2f}, "
        f"memory x{b['mem_total'] / a['mem_total']:.2f}, C_sp {a['csp']} -> {b['csp']}"
    )
