import { describe, expect, it } from "vitest";

import { colorForDensity, colorForSignal } from "../src/colors.js";
import { fitTransform, metricsText, splitPolyline } from "../src/render.js";
import { Sparkline } from "../src/sparkline.js";
import { GeometryMsg } from "../src/protocol.js";

describe("colorForDensity", () => {
  it("is pure blue at zero and pure red at jam", () => {
    expect(colorForDensity(0)).toBe("rgb(0,0,255)");
    expect(colorForDensity(1)).toBe("rgb(255,0,0)");
  });

  it("interpolates linearly and clamps", () => {
    expect(colorForDensity(0.5)).toBe("rgb(128,0,128)");
    expect(colorForDensity(-2)).toBe("rgb(0,0,255)");
    expect(colorForDensity(9)).toBe("rgb(255,0,0)");
  });
});

describe("colorForSignal", () => {
  it("keeps yellow and all-red distinct from any phase color", () => {
    const yellow = colorForSignal(0, 1);
    const allRed = colorForSignal(0, 2);
    const phases = [0, 1, 2, 3].map((p) => colorForSignal(p, 0));
    expect(yellow).not.toBe(allRed);
    for (const c of phases) {
      expect(c).not.toBe(yellow);
      expect(c).not.toBe(allRed);
    }
    expect(new Set(phases).size).toBe(4);  // phases distinguishable
  });
});

describe("splitPolyline", () => {
  it("cuts a straight line into equal cells", () => {
    const segs = splitPolyline([[0, 0], [12, 0]], 3);
    expect(segs).toHaveLength(3);
    expect(segs[0]).toEqual([[0, 0], [4, 0]]);
    expect(segs[2]).toEqual([[8, 0], [12, 0]]);
  });

  it("walks multi-segment polylines by arc length", () => {
    const segs = splitPolyline([[0, 0], [6, 0], [6, 6]], 2);
    expect(segs[0][1]).toEqual([6, 0]);   // midpoint is the corner
    expect(segs[1][1]).toEqual([6, 6]);
  });

  it("degenerate inputs fall back to the polyline", () => {
    expect(splitPolyline([[1, 1], [1, 1]], 4)).toEqual([[[1, 1], [1, 1]]]);
  });
});

describe("fitTransform", () => {
  const geo: GeometryMsg = {
    v: 1, kind: "geometry", scenario: "s", mode: "live", dt: 1, n_cells: 1,
    nodes: [],
    links: [{ id: "l", from: "a", to: "b", lanes: 1, cells: [0, 0],
              polyline: [[0, 0], [100, 50]] }],
  };

  it("maps the bounding box inside the canvas with y flipped", () => {
    const t = fitTransform(geo, 500, 400, 20);
    const sx = t.ox + 0 * t.scale;
    const sy = t.oy - 0 * t.scale;
    expect(sx).toBeGreaterThanOrEqual(20);
    expect(sy).toBeLessThanOrEqual(380);
    const northY = t.oy - 50 * t.scale;
    expect(northY).toBeLessThan(sy);      // larger world y is higher on screen
  });
});

describe("metrics", () => {
  it("formats the live panel", () => {
    expect(metricsText(null)).toMatch(/waiting/);
    const text = metricsText({
      v: 1, kind: "frame", t: 42, densities: [], signals: [],
      metrics: { queue: 3.2, throughput_cum: 100, mean_speed: 9.876,
                 delay_cum: 0 },
    });
    expect(text).toContain("t=42s");
    expect(text).toContain("queue=3.2");
    expect(text).toContain("9.88 m/s");
  });
});

describe("sparkline", () => {
  it("keeps a bounded rolling window", () => {
    const s = new Sparkline(5);
    for (let i = 0; i < 9; i++) s.push(i);
    expect(s.data).toEqual([4, 5, 6, 7, 8]);
  });
});
