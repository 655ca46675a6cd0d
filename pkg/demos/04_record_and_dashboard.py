"""Record a replay trace, inspect it, and show how to serve the dashboard.

The trace is newline-delimited JSON: a geometry header, then one frame per
simulated second.  The same frames stream over the dashboard socket.
Run:  python demos/04_record_and_dashboard.py
"""

import tempfile
from pathlib import Path

from ctmsim.bench import cmd_record
from ctmsim.replay import read_replay

out = Path(tempfile.gettempdir()) / "ctmsim-demo-trace.jsonl"
info = cmd_record("grid-2x2-v0", "maxpressure", seconds=120, out=out)
header, frames = read_replay(out)

print(f"recorded {info['frames']} frames of {info['scenario']} "
      f"under {info['controller']} -> {out}")
print(f"network: {header['n_cells']} cells, {len(header['links'])} links")
mid = frames[len(frames) // 2]
print(f"frame at t={mid['t']:.0f}s: queue {mid['metrics']['queue']:.1f} veh, "
      f"cumulative throughput {mid['metrics']['throughput_cum']:.1f} veh, "
      f"mean speed {mid['metrics']['mean_speed']:.2f} m/s")

print("""
To watch it in a browser (replay mode, steerable speed/pause):
    ctmsim serve --replay %s

To steer a live simulation instead (hot-swap controllers, switch scenarios):
    ctmsim serve --scenario grid-4x4-v0 --controller maxpressure
""" % out)
