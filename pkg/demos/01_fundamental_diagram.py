"""Sweep demand on a single road and trace out the fundamental diagram.

The simulated steady states land exactly on the triangular relation: the
rising branch has slope vf, the falling branch slope -w, and the apex sits
at (Q/vf, Q).  Run:  python demos/01_fundamental_diagram.py
"""

from ctmsim.bench import cmd_fd

result = cmd_fd(levels=60)

print(f"sampled {len(result.points)} steady states")
print(f"free-flow branch:  slope {result.slope_free:7.3f} m/s   "
      f"R^2 = {result.r2_free:.6f}")
print(f"congested branch:  slope {result.slope_congested:7.3f} m/s   "
      f"R^2 = {result.r2_congested:.6f}")
print(f"capacity point:    k = {result.critical_density:.4f} veh/m, "
      f"q = {result.critical_flow:.3f} veh/s")

# A quick ASCII picture: flow vs density.
width, height = 64, 14
ks = [p[0] for p in result.points]
qs = [p[1] for p in result.points]
grid = [[" "] * width for _ in range(height)]
for k, q, branch in result.points:
    col = int(k / max(ks) * (width - 1))
    row = height - 1 - int(q / max(qs) * (height - 1))
    grid[row][col] = "o" if branch == "free" else "x"
print("\nflow")
for row in grid:
    print("  " + "".join(row))
print("  " + "-" * width + "> density   (o free branch, x congested)")
