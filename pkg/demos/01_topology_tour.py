"""Tour of the 2D HyperX fabric: coordinates, ports, and distances.

A 2D HyperX with n switches per dimension is the Hamming graph H(2, n):
switches sit on an n x n grid and two switches are wired whenever they
share a row or a column. Every switch also hosts n endpoints, so the
8 x 8 build used throughout carries 512 endpoints on 64 switches.
"""

from hxalloc.topology import (
    NetworkShape,
    hamming_distance,
    link_count,
    minimal_paths,
    neighbors,
    theoretical_avg_distance,
)

shape = NetworkShape(q=2, n=8)

print("fabric:", shape)
print("switches:          ", shape.switch_count)
print("endpoints:         ", shape.endpoint_count)
print("network ports/sw:  ", shape.network_ports_per_switch, "+ 8 local")
print("network wires:     ", link_count(shape))
print()

# Coordinates are (row, col); switch ids count row-major.
sw = shape.switch_coord(19)
print("switch 19 sits at row/col", sw)
print("switch id of (2, 3):", shape.linear_switch_id((2, 3)))
print()

# One hop fixes one coordinate, so distance = differing coordinates.
pairs = [((0, 0), (0, 5)), ((0, 0), (4, 0)), ((0, 0), (3, 7)), ((2, 2), (2, 2))]
for a, b in pairs:
    print(f"distance {a} -> {b}: {hamming_distance(a, b)}")
print("mean distance over all pairs:", theoretical_avg_distance(shape))
print()

nbrs = neighbors(shape, (1, 1))
print(f"switch (1,1) has {len(nbrs)} neighbors;",
      "row peers:", [c for c in nbrs if c[0] == 1])
print()

# Aligned pairs have one shortest path; diagonal pairs have two.
for a, b in [((0, 0), (0, 5)), ((0, 0), (3, 5))]:
    routes = minimal_paths(shape, a, b)
    print(f"minimal paths {a} -> {b}:")
    for p in routes:
        print("   ", " -> ".join(map(str, p)))
print()

# Endpoints pack n per switch: endpoint id = switch id * n + offset.
ep = 137
addr = shape.endpoint_addr(ep)
print(f"endpoint {ep} = switch {addr.switch} offset {addr.offset}")
