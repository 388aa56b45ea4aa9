"""Gallery of the seven allocation shapes on the 8 x 8 fabric.

Each panel draws the switch grid with the number of endpoints the
64-rank partition p=0 takes on every switch (. = none). The contrast to
look for: Row and Rectangular stay compact, Diagonal touches every row
and column once, FullSpread takes one endpoint everywhere, and the two
random kinds scatter.
"""

from collections import Counter

from hxalloc.allocation import AllocationKind, build_partition
from hxalloc.topology import NetworkShape

shape = NetworkShape(q=2, n=8)

for kind in AllocationKind:
    part = build_partition(kind, 0, shape, size=64, seed=7)
    per_switch = Counter(addr.switch for addr in part.placement)
    print(f"--- {kind.value} (64 ranks, partition 0) ---")
    for row in range(shape.n):
        cells = (per_switch.get((row, col), 0) for col in range(shape.n))
        print("   " + " ".join(str(c) if c else "." for c in cells))
    switches = len(per_switch)
    print(f"   {switches} switches, "
          f"{sum(per_switch.values())} endpoints\n")
