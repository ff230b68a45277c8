"""
Counting the graphs of the Duhamel expansion
============================================

Forests of 2k paired ternary trees with m vertices, their leaf pairings,
and the power-counting budget of each term.
"""
import math

from gplab import feynman_graphs as fg

g = fg.enumerate_graphs(1, 2)[3]
print("a graph with k=1, m=2:", g.encode())
print("leaf pairs:", g.leaf_pairing)
print("valid:", fg.validate_pairing(g).ok)

print("\n k  m  graphs  bound 2^(4m+k)  summands (m+k)!/k!  power")
for row in fg.counts_table(3, 4):
    k, m = row["k"], row["m"]
    print(f"{k:2d} {m:2d} {row['count']:7d} {row['bound']:15d} {math.factorial(m + k) // math.factorial(k):19d}"
          f" {fg.power_counting(k, m)['total']:6d}")

# moving a mark breaks the structure and the validator names what failed
bad = fg.move_mark(g, 0, 1)
print("\nafter moving a mark:", fg.validate_pairing(bad).failures)
