/** Canvas rendering: density-colored links, signal discs, metrics text. */

import { colorForDensity, colorForSignal } from "./colors.js";
import { FrameMsg, GeometryMsg } from "./protocol.js";

interface Transform {
  scale: number;
  ox: number;
  oy: number;
}

export function fitTransform(
  geometry: GeometryMsg,
  width: number,
  height: number,
  margin = 30,
): Transform {
  let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
  for (const link of geometry.links) {
    for (const [x, y] of link.polyline) {
      minX = Math.min(minX, x); maxX = Math.max(maxX, x);
      minY = Math.min(minY, y); maxY = Math.max(maxY, y);
    }
  }
  const spanX = Math.max(maxX - minX, 1);
  const spanY = Math.max(maxY - minY, 1);
  const scale = Math.min(
    (width - 2 * margin) / spanX,
    (height - 2 * margin) / spanY,
  );
  return {
    scale,
    ox: margin - minX * scale + (width - 2 * margin - spanX * scale) / 2,
    // Flip y so north is up.
    oy: height - margin + minY * scale - (height - 2 * margin - spanY * scale) / 2,
  };
}

function toScreen(t: Transform, x: number, y: number): [number, number] {
  return [t.ox + x * t.scale, t.oy - y * t.scale];
}

/** Cut a polyline into n equal-length segments (one per cell). */
export function splitPolyline(
  polyline: [number, number][],
  n: number,
): [number, number][][] {
  const lengths: number[] = [];
  let total = 0;
  for (let i = 1; i < polyline.length; i++) {
    const dx = polyline[i][0] - polyline[i - 1][0];
    const dy = polyline[i][1] - polyline[i - 1][1];
    const l = Math.hypot(dx, dy);
    lengths.push(l);
    total += l;
  }
  if (total === 0 || n < 1) {
    return [polyline];
  }
  const pointAt = (s: number): [number, number] => {
    let acc = 0;
    for (let i = 0; i < lengths.length; i++) {
      if (s <= acc + lengths[i] || i === lengths.length - 1) {
        const f = lengths[i] > 0 ? (s - acc) / lengths[i] : 0;
        return [
          polyline[i][0] + f * (polyline[i + 1][0] - polyline[i][0]),
          polyline[i][1] + f * (polyline[i + 1][1] - polyline[i][1]),
        ];
      }
      acc += lengths[i];
    }
    return polyline[polyline.length - 1];
  };
  const segments: [number, number][][] = [];
  for (let k = 0; k < n; k++) {
    segments.push([pointAt((k * total) / n), pointAt(((k + 1) * total) / n)]);
  }
  return segments;
}

export function render(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  geometry: GeometryMsg,
  frame: FrameMsg | null,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#11151c";
  ctx.fillRect(0, 0, width, height);
  const t = fitTransform(geometry, width, height);

  for (const link of geometry.links) {
    const [first, last] = link.cells;
    const nCells = last - first + 1;
    const segments = splitPolyline(link.polyline, nCells);
    ctx.lineWidth = Math.max(2, Math.min(6, 1.5 + link.lanes));
    for (let c = 0; c < segments.length; c++) {
      const density = frame ? frame.densities[first + c] ?? 0 : 0;
      ctx.strokeStyle = colorForDensity(density);
      ctx.beginPath();
      const [a, b] = segments[c];
      ctx.moveTo(...toScreen(t, a[0], a[1]));
      ctx.lineTo(...toScreen(t, b[0], b[1]));
      ctx.stroke();
    }
  }

  for (const node of geometry.nodes) {
    if (!node.signalized) continue;
    const sig = frame && node.sig >= 0 ? frame.signals[node.sig] : null;
    const [x, y] = toScreen(t, node.x, node.y);
    ctx.beginPath();
    ctx.arc(x, y, 7, 0, 2 * Math.PI);
    ctx.fillStyle = sig
      ? colorForSignal(sig.phase, sig.interim)
      : "rgb(90,90,90)";
    ctx.fill();
    ctx.strokeStyle = "#e8e8e8";
    ctx.lineWidth = 1;
    ctx.stroke();
    if (sig && sig.interim === 0) {
      ctx.fillStyle = "#ffffff";
      ctx.font = "9px sans-serif";
      ctx.textAlign = "center";
      ctx.textBaseline = "middle";
      ctx.fillText(String(sig.phase), x, y);
    }
  }
}

export function metricsText(frame: FrameMsg | null): string {
  if (!frame) return "waiting for frames…";
  const m = frame.metrics;
  return (
    `t=${frame.t.toFixed(0)}s   queue=${m.queue.toFixed(1)} veh   ` +
    `throughput=${m.throughput_cum.toFixed(0)} veh   ` +
    `mean speed=${m.mean_speed.toFixed(2)} m/s`
  );
}
